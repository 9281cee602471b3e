//! `key = value` run configuration.

use mdgcl::pipeline::{FinetuneConfig, PretrainConfig, Task, TokenPooling};
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}` (expected {expected})")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

/// Hyperparameters of one run. Keys not present keep their defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dim_target: usize,
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub k: usize,
    /// `None` picks the class-balancing value.
    pub n: Option<usize>,
    pub walk_len: usize,
    pub heads: usize,
    pub shots: usize,
    pub task: Task,
    pub seed: u64,
    pub ego_hops: usize,
    pub ft_lr: f64,
    pub ft_epochs: usize,
    pub holdout: f64,
    pub token_pooling: TokenPooling,
    pub enhance: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pre = PretrainConfig::default();
        let ft = FinetuneConfig::default();
        Self {
            dim_target: pre.dim_target,
            hidden: pre.hidden,
            lr: pre.lr,
            epochs: pre.epochs,
            batch_size: pre.batch_size,
            k: pre.subgraphs_per_domain,
            n: None,
            walk_len: pre.walk_length,
            heads: ft.heads,
            shots: 1,
            task: Task::Node,
            seed: 0,
            ego_hops: ft.ego_hops,
            ft_lr: ft.lr,
            ft_epochs: ft.epochs,
            holdout: 0.0,
            token_pooling: TokenPooling::Sum,
            enhance: true,
        }
    }
}

pub const KEYS: &[&str] = &[
    "dim_target",
    "hidden",
    "lr",
    "epochs",
    "batch_size",
    "K",
    "N",
    "walk_len",
    "heads",
    "shots",
    "task",
    "seed",
    "ego_hops",
    "ft_lr",
    "ft_epochs",
    "holdout",
    "token_pooling",
    "enhance",
];

fn parse<T: FromStr>(line: usize, key: &str, value: &str, expected: &'static str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
        expected,
    })
}

fn positive(line: usize, key: &str, value: &str) -> Result<usize, ConfigError> {
    match parse::<usize>(line, key, value, "a positive integer")? {
        0 => Err(ConfigError::BadValue {
            line,
            key: key.to_string(),
            value: value.to_string(),
            expected: "a positive integer",
        }),
        v => Ok(v),
    }
}

fn positive_real(line: usize, key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse(line, key, value, "a positive number")?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::BadValue {
            line,
            key: key.to_string(),
            value: value.to_string(),
            expected: "a positive number",
        })
    }
}

impl RunConfig {
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            if seen.contains(&key) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(key);
            match key {
                "dim_target" => cfg.dim_target = positive(line, key, value)?,
                "hidden" => cfg.hidden = positive(line, key, value)?,
                "lr" => cfg.lr = positive_real(line, key, value)?,
                "epochs" => cfg.epochs = positive(line, key, value)?,
                "batch_size" => cfg.batch_size = positive(line, key, value)?,
                "K" => cfg.k = positive(line, key, value)?,
                "N" => cfg.n = Some(positive(line, key, value)?),
                "walk_len" => cfg.walk_len = positive(line, key, value)?,
                "heads" => cfg.heads = positive(line, key, value)?,
                "shots" => cfg.shots = positive(line, key, value)?,
                "task" => cfg.task = parse(line, key, value, "`node` or `graph`")?,
                "seed" => cfg.seed = parse(line, key, value, "a nonnegative integer")?,
                "ego_hops" => cfg.ego_hops = parse(line, key, value, "a nonnegative integer")?,
                "ft_lr" => cfg.ft_lr = positive_real(line, key, value)?,
                "ft_epochs" => cfg.ft_epochs = positive(line, key, value)?,
                "holdout" => {
                    let v: f64 = parse(line, key, value, "a fraction in [0, 1)")?;
                    if !(0.0..1.0).contains(&v) {
                        return Err(ConfigError::BadValue {
                            line,
                            key: key.to_string(),
                            value: value.to_string(),
                            expected: "a fraction in [0, 1)",
                        });
                    }
                    cfg.holdout = v;
                }
                "token_pooling" => {
                    cfg.token_pooling = match value {
                        "sum" => TokenPooling::Sum,
                        "mean" => TokenPooling::Mean,
                        _ => {
                            return Err(ConfigError::BadValue {
                                line,
                                key: key.to_string(),
                                value: value.to_string(),
                                expected: "`sum` or `mean`",
                            })
                        }
                    }
                }
                "enhance" => cfg.enhance = parse(line, key, value, "`true` or `false`")?,
                _ => unreachable!("key list and match arms agree"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-key checks.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.dim_target.is_multiple_of(self.heads) {
            return Err(ConfigError::Invalid(format!(
                "heads ({}) must divide dim_target ({})",
                self.heads, self.dim_target
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    pub fn pretrain(&self) -> PretrainConfig {
        PretrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            dim_target: self.dim_target,
            hidden: self.hidden,
            subgraphs_per_domain: self.k,
            walk_length: self.walk_len,
            negatives_per_pair: self.n,
            seed: self.seed,
            token_pooling: self.token_pooling,
            holdout_fraction: self.holdout,
            target_holdout_accuracy: None,
        }
    }

    pub fn finetune(&self) -> FinetuneConfig {
        FinetuneConfig {
            epochs: self.ft_epochs,
            lr: self.ft_lr,
            heads: self.heads,
            ego_hops: self.ego_hops,
            seed: self.seed,
            enhance: self.enhance,
            dim_target: self.dim_target,
            hidden: self.hidden,
        }
    }
}
