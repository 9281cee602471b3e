//! End-to-end orchestration: pre-training, few-shot splits, target
//! enhancement, fine-tuning, metrics and the domain separation statistic.

mod finetune;
mod metrics;
mod pretrain;
mod separation;
mod split;
pub mod verify;

pub use finetune::{
    build_finetune_data, enhance_target, finetune, scratch_baseline, source_tokens, FineTunedModel, FinetuneConfig,
    FinetuneOutcome,
};
pub use metrics::{evaluate_metrics, Metrics};
pub use pretrain::{
    embed_domain, pretrain, pretrain_with_progress, EpochStats, PretrainConfig, PretrainOutput, TokenPooling,
};
pub use separation::{domain_separation, Separation};
pub use split::{few_shot_split, FewShotSplit};

use crate::error::Error;
use std::fmt;
use std::str::FromStr;

/// Downstream task type.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Task {
    /// Classify nodes of the target graph.
    #[default]
    Node,
    /// Classify the ego network around each labelled node by its center's label.
    Graph,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "node" => Ok(Task::Node),
            "graph" => Ok(Task::Graph),
            other => Err(Error::InvalidArgument(format!(
                "task must be `node` or `graph`, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Node => "node",
            Task::Graph => "graph",
        })
    }
}
