//! Dense numeric engine: GCN, domain attention, projection heads,
//! cross-entropy, Adam and a finite-difference gradient checker.
//!
//! Forward passes return an explicit cache consumed by the matching backward
//! pass; gradients are exact for the fixed loss compositions in
//! [`objective`].

pub mod adam;
pub mod attention;
pub mod gcn;
pub mod gradcheck;
pub mod loss;
pub mod objective;

pub use adam::{Adam, AdamConfig};
pub use attention::{attention_backward, attention_enhance, AttentionCache, AttentionParams, HeadParams};
pub use gcn::{
    gcn_backward, gcn_forward, gcn_forward_pooled, gcn_pooled_backward, GcnCache, GcnGrads, GcnParams, PooledCache,
};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use loss::{cross_entropy, softmax};
pub use objective::{FinetuneData, FinetuneModel, Instances, PretrainModel};

use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Linear projection head `v ↦ vᵀW` (no bias).
#[derive(Clone, Debug, PartialEq)]
pub struct ProjHead<T> {
    pub w: Matrix<T>,
}

impl<T: Scalar> ProjHead<T> {
    pub fn new(w: Matrix<T>) -> Self {
        Self { w }
    }

    pub fn input_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.w.cols()
    }
}

/// Named parameter tensors in a fixed order, for optimizers and gradient checks.
pub trait ParamSet<T> {
    fn names(&self) -> Vec<String>;
    fn tensors(&self) -> Vec<&Matrix<T>>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>>;
}
