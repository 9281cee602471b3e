//! Two-layer GCN `H = Â · ReLU(Â · X · W1) · W2`, no biases.

use super::ParamSet;
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::linalg::{outer, Matrix};
use crate::rng::glorot_uniform;
use crate::scalar::Scalar;
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct GcnParams<T> {
    pub w1: Matrix<T>,
    pub w2: Matrix<T>,
}

impl<T: Scalar> GcnParams<T> {
    pub fn new(w1: Matrix<T>, w2: Matrix<T>) -> Result<Self> {
        if w1.cols() != w2.rows() {
            return Err(Error::Shape(format!(
                "W1 is {}x{}, W2 is {}x{}",
                w1.rows(),
                w1.cols(),
                w2.rows(),
                w2.cols()
            )));
        }
        Ok(Self { w1, w2 })
    }

    /// Glorot-uniform weights for widths `input → hidden → hidden`.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w1: glorot_uniform(input_dim, hidden, rng),
            w2: glorot_uniform(hidden, hidden, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }
}

impl<T: Scalar> ParamSet<T> for GcnParams<T> {
    fn names(&self) -> Vec<String> {
        vec!["gcn.W1".into(), "gcn.W2".into()]
    }

    fn tensors(&self) -> Vec<&Matrix<T>> {
        vec![&self.w1, &self.w2]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        vec![&mut self.w1, &mut self.w2]
    }
}

/// Intermediates of [`gcn_forward`].
#[derive(Clone, Debug)]
pub struct GcnCache<T> {
    ax: Matrix<T>,
    z1: Matrix<T>,
    aa1: Matrix<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnGrads<T> {
    pub w1: Matrix<T>,
    pub w2: Matrix<T>,
    /// Gradient with respect to the input features.
    pub x: Matrix<T>,
}

#[inline]
fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

fn check_input<T: Scalar>(adj: &NormalizedAdjacency<T>, x: &Matrix<T>, p: &GcnParams<T>) -> Result<()> {
    if x.rows() != adj.num_nodes() || x.cols() != p.input_dim() {
        return Err(Error::Shape(format!(
            "GCN over {} nodes with input width {} got a {}x{} feature matrix",
            adj.num_nodes(),
            p.input_dim(),
            x.rows(),
            x.cols()
        )));
    }
    Ok(())
}

pub fn gcn_forward<T: Scalar>(
    adj: &NormalizedAdjacency<T>,
    x: &Matrix<T>,
    p: &GcnParams<T>,
) -> Result<(Matrix<T>, GcnCache<T>)> {
    check_input(adj, x, p)?;
    let ax = adj.matmul(x)?;
    let z1 = ax.matmul(&p.w1)?;
    let aa1 = adj.matmul(&z1.map(relu))?;
    let h = aa1.matmul(&p.w2)?;
    Ok((h, GcnCache { ax, z1, aa1 }))
}

/// Backward pass of [`gcn_forward`] for upstream gradient `g_h = ∂L/∂H`.
/// The ReLU derivative at exactly zero is taken as zero.
pub fn gcn_backward<T: Scalar>(
    adj: &NormalizedAdjacency<T>,
    cache: &GcnCache<T>,
    p: &GcnParams<T>,
    g_h: &Matrix<T>,
) -> Result<GcnGrads<T>> {
    let w2 = cache.aa1.t_matmul(g_h)?;
    // Â is symmetric, so Âᵀ·G = Â·G
    let mut g_z1 = adj.matmul(&g_h.matmul_t(&p.w2)?)?;
    for (g, &z) in g_z1.as_mut_slice().iter_mut().zip(cache.z1.as_slice()) {
        if z <= T::zero() {
            *g = T::zero();
        }
    }
    let w1 = cache.ax.t_matmul(&g_z1)?;
    let x = adj.matmul(&g_z1.matmul_t(&p.w1)?)?;
    Ok(GcnGrads { w1, w2, x })
}

/// Intermediates of [`gcn_forward_pooled`].
#[derive(Clone, Debug)]
pub struct PooledCache<T> {
    ax: Matrix<T>,
    z1: Matrix<T>,
    /// Row sums of Â.
    weights: Vec<T>,
    /// `weightsᵀ · ReLU(Z1)`
    pooled_hidden: Vec<T>,
}

/// Sum readout over all nodes of [`gcn_forward`], computed without forming
/// `H`: `1ᵀ Â A1 W2 = (Â1)ᵀ A1 W2`.
pub fn gcn_forward_pooled<T: Scalar>(
    adj: &NormalizedAdjacency<T>,
    x: &Matrix<T>,
    p: &GcnParams<T>,
) -> Result<(Vec<T>, PooledCache<T>)> {
    check_input(adj, x, p)?;
    let ax = adj.matmul(x)?;
    let z1 = ax.matmul(&p.w1)?;
    let weights = adj.row_sums();
    let mut pooled_hidden = vec![T::zero(); z1.cols()];
    for (i, &s) in weights.iter().enumerate() {
        for (acc, &z) in pooled_hidden.iter_mut().zip(z1.row(i)) {
            *acc += s * relu(z);
        }
    }
    let r = p.w2.vec_matmul(&pooled_hidden)?;
    Ok((
        r,
        PooledCache {
            ax,
            z1,
            weights,
            pooled_hidden,
        },
    ))
}

/// Backward pass of [`gcn_forward_pooled`] for `g_r = ∂L/∂readout`.
pub fn gcn_pooled_backward<T: Scalar>(
    adj: &NormalizedAdjacency<T>,
    cache: &PooledCache<T>,
    p: &GcnParams<T>,
    g_r: &[T],
    want_input_grad: bool,
) -> Result<GcnGrads<T>> {
    let w2 = outer(&cache.pooled_hidden, g_r);
    let u = p.w2.matvec(g_r)?;
    let (n, h) = cache.z1.shape();
    let mut g_z1 = Matrix::zeros(n, h);
    for i in 0..n {
        let s = cache.weights[i];
        let dst = g_z1.row_mut(i);
        for ((g, &z), &uk) in dst.iter_mut().zip(cache.z1.row(i)).zip(&u) {
            if z > T::zero() {
                *g = s * uk;
            }
        }
    }
    let w1 = cache.ax.t_matmul(&g_z1)?;
    let x = if want_input_grad {
        adj.matmul(&g_z1.matmul_t(&p.w1)?)?
    } else {
        Matrix::zeros(0, 0)
    };
    Ok(GcnGrads { w1, w2, x })
}
