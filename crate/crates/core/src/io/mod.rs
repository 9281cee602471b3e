//! On-disk formats and the synthetic domain generator.

pub mod checkpoint;
pub mod export;
pub mod graph_json;
pub mod synth;

pub use checkpoint::{Checkpoint, Tensor};
pub use export::{export_embeddings, write_embeddings, MetricsRecord};
pub use graph_json::{load_graph, save_graph};
pub use synth::{generate_synthetic_domain, SynthDomainConfig};
