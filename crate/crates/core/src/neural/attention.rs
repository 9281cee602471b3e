//! Multi-head attention of target nodes over source domain tokens.
//!
//! For node `i` and token `m`, head `k` scores `s_im = (Wkᵀ t_m) · (Wqᵀ x_i)`
//! (unscaled), normalizes with a softmax over `m`, and returns
//! `Σ_m α_im Wvᵀ t_m`. Head outputs are concatenated into `p_i` (width `d̃`)
//! and the enhanced feature is `x_i + p_i`.

use super::loss::softmax;
use super::ParamSet;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::glorot_uniform;
use crate::scalar::Scalar;
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams<T> {
    pub wq: Matrix<T>,
    pub wk: Matrix<T>,
    pub wv: Matrix<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<T> {
    pub heads: Vec<HeadParams<T>>,
}

impl<T: Scalar> AttentionParams<T> {
    /// Glorot-uniform heads of width `dim / num_heads`.
    pub fn init<R: Rng + ?Sized>(dim: usize, num_heads: usize, rng: &mut R) -> Result<Self> {
        let head_dim = head_width(dim, num_heads)?;
        let heads = (0..num_heads)
            .map(|_| HeadParams {
                wq: glorot_uniform(dim, head_dim, rng),
                wk: glorot_uniform(dim, head_dim, rng),
                wv: glorot_uniform(dim, head_dim, rng),
            })
            .collect();
        Ok(Self { heads })
    }

    pub fn new(heads: Vec<HeadParams<T>>) -> Result<Self> {
        let first = heads
            .first()
            .ok_or_else(|| Error::InvalidArgument("attention needs at least one head".into()))?;
        let (dim, head_dim) = first.wq.shape();
        if head_dim * heads.len() != dim {
            return Err(Error::Shape(format!(
                "{} heads of width {head_dim} do not cover dimension {dim}",
                heads.len()
            )));
        }
        for h in &heads {
            for w in [&h.wq, &h.wk, &h.wv] {
                if w.shape() != (dim, head_dim) {
                    return Err(Error::Shape(format!(
                        "head matrix is {}x{}, expected {dim}x{head_dim}",
                        w.rows(),
                        w.cols()
                    )));
                }
            }
        }
        Ok(Self { heads })
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn dim(&self) -> usize {
        self.heads[0].wq.rows()
    }

    pub fn head_dim(&self) -> usize {
        self.heads[0].wq.cols()
    }
}

/// `dim / num_heads`, or an error when the heads do not divide `dim`.
pub fn head_width(dim: usize, num_heads: usize) -> Result<usize> {
    if num_heads == 0 || !dim.is_multiple_of(num_heads) {
        return Err(Error::InvalidArgument(format!(
            "number of attention heads ({num_heads}) must divide the feature dimension ({dim})"
        )));
    }
    Ok(dim / num_heads)
}

impl<T: Scalar> ParamSet<T> for AttentionParams<T> {
    fn names(&self) -> Vec<String> {
        (0..self.heads.len())
            .flat_map(|k| ["Wq", "Wk", "Wv"].map(|w| format!("attn.h{k}.{w}")))
            .collect()
    }

    fn tensors(&self) -> Vec<&Matrix<T>> {
        self.heads.iter().flat_map(|h| [&h.wq, &h.wk, &h.wv]).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        self.heads
            .iter_mut()
            .flat_map(|h| [&mut h.wq, &mut h.wk, &mut h.wv])
            .collect()
    }
}

#[derive(Clone, Debug)]
struct HeadCache<T> {
    q: Matrix<T>,
    k: Matrix<T>,
    v: Matrix<T>,
    alpha: Matrix<T>,
}

/// Intermediates of [`attention_enhance`].
#[derive(Clone, Debug)]
pub struct AttentionCache<T> {
    heads: Vec<HeadCache<T>>,
}

impl<T: Scalar> AttentionCache<T> {
    /// Attention weights of head `k`, one row per node, one column per token.
    pub fn alpha(&self, k: usize) -> &Matrix<T> {
        &self.heads[k].alpha
    }
}

/// Returns `X + P` where row `i` of `P` is the concatenated head outputs for
/// node `i`. `tokens` holds one token per row.
pub fn attention_enhance<T: Scalar>(
    x: &Matrix<T>,
    tokens: &Matrix<T>,
    params: &AttentionParams<T>,
) -> Result<(Matrix<T>, AttentionCache<T>)> {
    if tokens.rows() == 0 {
        return Err(Error::Empty("attention over zero domain tokens"));
    }
    let dim = params.dim();
    if x.cols() != dim || tokens.cols() != dim {
        return Err(Error::Shape(format!(
            "attention of width {dim} got features of width {} and tokens of width {}",
            x.cols(),
            tokens.cols()
        )));
    }
    let hd = params.head_dim();
    let mut out = x.clone();
    let mut caches = Vec::with_capacity(params.num_heads());
    for (k, head) in params.heads.iter().enumerate() {
        let q = x.matmul(&head.wq)?;
        let kt = tokens.matmul(&head.wk)?;
        let v = tokens.matmul(&head.wv)?;
        let scores = q.matmul_t(&kt)?;
        let mut alpha = Matrix::zeros(x.rows(), tokens.rows());
        for i in 0..x.rows() {
            alpha.row_mut(i).copy_from_slice(&softmax(scores.row(i)));
        }
        let p = alpha.matmul(&v)?;
        for i in 0..x.rows() {
            let dst = &mut out.row_mut(i)[k * hd..(k + 1) * hd];
            for (o, &pv) in dst.iter_mut().zip(p.row(i)) {
                *o += pv;
            }
        }
        caches.push(HeadCache { q, k: kt, v, alpha });
    }
    Ok((out, AttentionCache { heads: caches }))
}

/// Gradients of every head matrix given `g_out = ∂L/∂(X + P)`.
pub fn attention_backward<T: Scalar>(
    x: &Matrix<T>,
    tokens: &Matrix<T>,
    params: &AttentionParams<T>,
    cache: &AttentionCache<T>,
    g_out: &Matrix<T>,
) -> Result<AttentionParams<T>> {
    if g_out.shape() != x.shape() {
        return Err(Error::Shape("upstream gradient must match the feature shape".into()));
    }
    let hd = params.head_dim();
    let mut grads = Vec::with_capacity(params.num_heads());
    for (k, hc) in cache.heads.iter().enumerate() {
        let g_p = g_out.column_block(k * hd, (k + 1) * hd);
        let g_alpha = g_p.matmul_t(&hc.v)?;
        let g_v = hc.alpha.t_matmul(&g_p)?;
        let mut g_s = Matrix::zeros(hc.alpha.rows(), hc.alpha.cols());
        for i in 0..hc.alpha.rows() {
            let a = hc.alpha.row(i);
            let ga = g_alpha.row(i);
            let inner: T = a.iter().zip(ga).map(|(&p, &g)| p * g).sum();
            for ((s, &p), &g) in g_s.row_mut(i).iter_mut().zip(a).zip(ga) {
                *s = p * (g - inner);
            }
        }
        let g_q = g_s.matmul(&hc.k)?;
        let g_k = g_s.t_matmul(&hc.q)?;
        grads.push(HeadParams {
            wq: x.t_matmul(&g_q)?,
            wk: tokens.t_matmul(&g_k)?,
            wv: tokens.t_matmul(&g_v)?,
        });
    }
    Ok(AttentionParams { heads: grads })
}
