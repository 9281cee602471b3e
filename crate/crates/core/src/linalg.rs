//! Small dense row-major matrix used throughout the numeric code.
//!
//! Every product uses a fixed loop order so that repeated evaluation is
//! bit-identical.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use std::ops::{Index, IndexMut};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally long rows. An empty slice yields a 0x0 matrix.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape(format!("row {i} has width {}, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Copies the selected rows, in the given order.
    pub fn select_rows(&self, ids: &[usize]) -> Self {
        let mut data = Vec::with_capacity(ids.len() * self.cols);
        for &i in ids {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: ids.len(),
            cols: self.cols,
            data,
        }
    }

    /// Copies columns `start..end`.
    pub fn column_block(&self, start: usize, end: usize) -> Self {
        let width = end - start;
        let mut data = Vec::with_capacity(self.rows * width);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[start..end]);
        }
        Self {
            rows: self.rows,
            cols: width,
            data,
        }
    }

    /// Writes `block` into columns starting at `start`.
    pub fn set_column_block(&mut self, start: usize, block: &Matrix<T>) {
        assert_eq!(block.rows, self.rows);
        assert!(start + block.cols <= self.cols);
        for i in 0..self.rows {
            let dst = &mut self.row_mut(i)[start..start + block.cols];
            dst.copy_from_slice(block.row(i));
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    fn check_product(&self, other: &Self, lhs_inner: usize, rhs_inner: usize, op: &str) -> Result<()> {
        if lhs_inner != rhs_inner {
            return Err(Error::Shape(format!(
                "{op}: {}x{} and {}x{} do not conform",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    /// `self · other`
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_product(other, self.cols, other.rows, "matmul")?;
        let mut out = Self::zeros(self.rows, other.cols);
        let n = other.cols;
        for i in 0..self.rows {
            let a = self.row(i);
            let dst = &mut out.data[i * n..(i + 1) * n];
            let mut k = 0;
            while k + 4 <= a.len() {
                axpy4(
                    dst,
                    [a[k], a[k + 1], a[k + 2], a[k + 3]],
                    [other.row(k), other.row(k + 1), other.row(k + 2), other.row(k + 3)],
                );
                k += 4;
            }
            for k in k..a.len() {
                axpy(dst, a[k], other.row(k));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        self.check_product(other, self.rows, other.rows, "t_matmul")?;
        let n = other.cols;
        let mut out = Self::zeros(self.cols, n);
        let mut k = 0;
        while k + 4 <= self.rows {
            let a = [self.row(k), self.row(k + 1), self.row(k + 2), self.row(k + 3)];
            let b = [other.row(k), other.row(k + 1), other.row(k + 2), other.row(k + 3)];
            for i in 0..self.cols {
                axpy4(
                    &mut out.data[i * n..(i + 1) * n],
                    [a[0][i], a[1][i], a[2][i], a[3][i]],
                    b,
                );
            }
            k += 4;
        }
        for k in k..self.rows {
            let a = self.row(k);
            for (i, &aki) in a.iter().enumerate() {
                axpy(&mut out.data[i * n..(i + 1) * n], aki, other.row(k));
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        self.check_product(other, self.cols, other.cols, "matmul_t")?;
        Ok(Self::from_fn(self.rows, other.rows, |i, j| {
            dot(self.row(i), other.row(j))
        }))
    }

    /// Row vector times matrix: `v · self`.
    pub fn vec_matmul(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.rows {
            return Err(Error::Shape(format!(
                "vector of length {} times {}x{} matrix",
                v.len(),
                self.rows,
                self.cols
            )));
        }
        let mut out = vec![T::zero(); self.cols];
        for (k, &vk) in v.iter().enumerate() {
            if vk != T::zero() {
                axpy(&mut out, vk, self.row(k));
            }
        }
        Ok(out)
    }

    /// Matrix times column vector: `self · v`.
    pub fn matvec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.cols {
            return Err(Error::Shape(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn column_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            axpy(&mut out, T::one(), self.row(i));
        }
        out
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::lit(x.to_f64_lossy())).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// `dst += a * x`
#[inline]
pub fn axpy<T: Scalar>(dst: &mut [T], a: T, x: &[T]) {
    debug_assert_eq!(dst.len(), x.len());
    for (d, &v) in dst.iter_mut().zip(x) {
        *d += a * v;
    }
}

/// `dst += Σ_j a[j]·x[j]`, one pass over `dst`.
#[inline]
pub fn axpy4<T: Scalar>(dst: &mut [T], a: [T; 4], x: [&[T]; 4]) {
    let n = dst.len();
    let (x0, x1, x2, x3) = (&x[0][..n], &x[1][..n], &x[2][..n], &x[3][..n]);
    for j in 0..n {
        dst[j] += a[0] * x0[j] + a[1] * x1[j] + a[2] * x2[j] + a[3] * x3[j];
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Outer product `u vᵀ`.
pub fn outer<T: Scalar>(u: &[T], v: &[T]) -> Matrix<T> {
    Matrix::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
}
