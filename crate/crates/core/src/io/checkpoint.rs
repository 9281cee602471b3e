//! Versioned binary tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "MDGC" | version: u32 | count: u32
//! count x { name_len: u16 | name: utf8 | rank: u8 | dims: rank x u32 | values: f64 x prod(dims) }
//! ```
//!
//! Tensors are written in ascending name order, so identical contents always
//! produce identical bytes.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"MDGC";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} hold {len} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn insert_matrix<T: Scalar>(&mut self, name: impl Into<String>, m: &Matrix<T>) {
        let data = m.as_slice().iter().map(|x| x.to_f64_lossy()).collect();
        self.insert(
            name,
            Tensor {
                dims: vec![m.rows(), m.cols()],
                data,
            },
        );
    }

    pub fn insert_vector<T: Scalar>(&mut self, name: impl Into<String>, v: &[T]) {
        let data = v.iter().map(|x| x.to_f64_lossy()).collect();
        self.insert(
            name,
            Tensor {
                dims: vec![v.len()],
                data,
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Rank-2 tensor as a matrix.
    pub fn matrix<T: Scalar>(&self, name: &str) -> Result<Matrix<T>> {
        let t = self.get(name).ok_or_else(|| Error::MissingTensor(name.to_string()))?;
        if t.rank() != 2 {
            return Err(Error::Shape(format!("`{name}` has rank {}, expected 2", t.rank())));
        }
        Matrix::from_vec(t.dims[0], t.dims[1], t.data.iter().map(|&x| T::lit(x)).collect())
    }

    /// Rank-1 tensor as a vector.
    pub fn vector<T: Scalar>(&self, name: &str) -> Result<Vec<T>> {
        let t = self.get(name).ok_or_else(|| Error::MissingTensor(name.to_string()))?;
        if t.rank() != 1 {
            return Err(Error::Shape(format!("`{name}` has rank {}, expected 1", t.rank())));
        }
        Ok(t.data.iter().map(|&x| T::lit(x)).collect())
    }

    /// Indices `i` of every tensor named `<prefix>.<i>`, ascending.
    pub fn indexed(&self, prefix: &str) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .names()
            .filter_map(|n| n.strip_prefix(prefix)?.strip_prefix('.')?.parse().ok())
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(
            &u32::try_from(self.tensors.len())
                .map_err(|_| too_big("tensor count"))?
                .to_le_bytes(),
        );
        for (name, t) in &self.tensors {
            if let Some(bad) = t.data.iter().find(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("tensor `{name}` holds {bad}")));
            }
            let len = u16::try_from(name.len()).map_err(|_| too_big("tensor name"))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(u8::try_from(t.rank()).map_err(|_| too_big("tensor rank"))?);
            for &d in &t.dims {
                out.extend_from_slice(&u32::try_from(d).map_err(|_| too_big("tensor dim"))?.to_le_bytes());
            }
            for &x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, not a checkpoint".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let count = r.u32()?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let len = usize::from(r.u16()?);
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = usize::from(r.take(1)?[0]);
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32()? as usize);
            }
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Format(format!("tensor `{name}` is too large")))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Format("overflow".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            if tensors.insert(name.clone(), Tensor { dims, data }).is_some() {
                return Err(Error::Format(format!("duplicate tensor `{name}`")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after the last tensor",
                bytes.len() - r.pos
            )));
        }
        Ok(Self { tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn too_big(what: &str) -> Error {
    Error::Format(format!("{what} exceeds the format limit"))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated checkpoint at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
