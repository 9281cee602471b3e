//! Multi-domain graph contrastive pre-training and cross-domain few-shot
//! transfer.
//!
//! Source graphs are unified to a shared feature width by truncated SVD,
//! summarized by one domain token each, and used to pre-train a two-layer GCN
//! to tell whether two random-walk subgraphs come from the same domain. A
//! target graph is then enhanced with attention over the source tokens and
//! fine-tuned in the few-shot regime.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`, which is what the pipeline and
//! checkpoints use.

pub mod contrastive;
pub mod dimred;
pub mod error;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod neural;
pub mod pipeline;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type FeatureGraph = graph::FeatureGraph<f64>;
pub type FeatureGraph32 = graph::FeatureGraph<f32>;
pub type NormalizedAdjacency = graph::NormalizedAdjacency<f64>;
pub type DimMap = dimred::DimMap<f64>;
pub type DomainToken = contrastive::DomainToken<f64>;
pub type Subgraph = contrastive::Subgraph<f64>;
pub type MergedSample = contrastive::MergedSample<f64>;
pub type GcnParams = neural::GcnParams<f64>;
pub type AttentionParams = neural::AttentionParams<f64>;
pub type ProjHead = neural::ProjHead<f64>;
pub type FineTunedModel = pipeline::FineTunedModel<f64>;

pub use contrastive::PairPlan;
pub use io::checkpoint::Checkpoint;
pub use pipeline::{FewShotSplit, FinetuneConfig, Metrics, PretrainConfig, Task};
