use crate::contrastive::{
    build_domain_token, build_mean_token, build_training_set_with_tokens, DomainToken, PairPlan, TrainingSet,
};
use crate::dimred::{apply_map, fit_map, DimMap};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, FeatureGraph};
use crate::io::checkpoint::Checkpoint;
use crate::linalg::Matrix;
use crate::neural::gcn::gcn_forward;
use crate::neural::{Adam, AdamConfig, GcnParams, ParamSet, PretrainModel, ProjHead};
use crate::rng::{glorot_uniform, stream};
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rayon::prelude::*;

/// How a domain's unified features are pooled into its token.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TokenPooling {
    #[default]
    Sum,
    Mean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub dim_target: usize,
    pub hidden: usize,
    pub subgraphs_per_domain: usize,
    pub walk_length: usize,
    /// `None` picks the class-balancing `N`.
    pub negatives_per_pair: Option<usize>,
    pub seed: u64,
    pub token_pooling: TokenPooling,
    /// Fraction of pairs held out of training and used only for monitoring.
    pub holdout_fraction: f64,
    /// Stop once held-out accuracy reaches this value.
    pub target_holdout_accuracy: Option<f64>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            lr: 1e-4,
            dim_target: 50,
            hidden: 256,
            subgraphs_per_domain: 50,
            walk_length: 50,
            negatives_per_pair: None,
            seed: 0,
            token_pooling: TokenPooling::Sum,
            holdout_fraction: 0.0,
            target_holdout_accuracy: None,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("dim_target", self.dim_target),
            ("hidden", self.hidden),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::InvalidArgument(format!(
                "holdout fraction must lie in [0, 1), got {}",
                self.holdout_fraction
            )));
        }
        Ok(())
    }

    pub fn plan(&self, num_domains: usize) -> Result<PairPlan> {
        match self.negatives_per_pair {
            Some(n) => PairPlan::new(self.subgraphs_per_domain, n, self.walk_length),
            None => PairPlan::balanced(num_domains, self.subgraphs_per_domain, self.walk_length),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch's minibatches, weighted by batch size.
    pub mean_loss: f64,
    pub holdout_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct PretrainOutput<T> {
    pub model: PretrainModel<T>,
    pub maps: Vec<DimMap<T>>,
    pub tokens: Vec<DomainToken<T>>,
    pub plan: PairPlan,
    pub num_pairs: usize,
    pub num_holdout: usize,
    pub history: Vec<EpochStats>,
    pub config: PretrainConfig,
}

impl<T: Scalar> PretrainOutput<T> {
    /// Tensors `gcn.W1`, `gcn.W2`, `proj_pre.W`, `token.<i>`, `vmap.<i>`.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        for (name, t) in self.model.names().into_iter().zip(self.model.tensors()) {
            ck.insert_matrix(name, t);
        }
        for (i, tok) in self.tokens.iter().enumerate() {
            ck.insert_vector(format!("token.{i}"), &tok.vector);
        }
        for (i, m) in self.maps.iter().enumerate() {
            ck.insert_matrix(format!("vmap.{i}"), m.projection());
        }
        ck
    }

    pub fn final_holdout_accuracy(&self) -> Option<f64> {
        self.history.last().and_then(|s| s.holdout_accuracy)
    }
}

pub fn pretrain<T: Scalar>(domains: &[FeatureGraph<T>], cfg: &PretrainConfig) -> Result<PretrainOutput<T>> {
    pretrain_with_progress(domains, cfg, |_| {})
}

/// Pre-trains on `domains` (domain `i` of the slice gets id `i`), calling
/// `on_epoch` after every epoch.
pub fn pretrain_with_progress<T: Scalar>(
    domains: &[FeatureGraph<T>],
    cfg: &PretrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<PretrainOutput<T>> {
    cfg.validate()?;
    if domains.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "pre-training needs at least 2 domains, got {}",
            domains.len()
        )));
    }
    if let Some(i) = domains.iter().position(|g| g.num_nodes() == 0) {
        return Err(Error::InvalidGraph(format!("domain {i} has no nodes")));
    }
    let plan = cfg.plan(domains.len())?;

    let fitted = domains
        .par_iter()
        .map(|g| {
            let map = fit_map(g.features(), cfg.dim_target)?;
            let x = apply_map(g.features(), &map)?;
            Ok((map, x))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut maps = Vec::with_capacity(domains.len());
    let mut unified = Vec::with_capacity(domains.len());
    let mut tokens = Vec::with_capacity(domains.len());
    for (i, (g, (map, x))) in domains.iter().zip(fitted).enumerate() {
        tokens.push(match cfg.token_pooling {
            TokenPooling::Sum => build_domain_token(&x, i as u32)?,
            TokenPooling::Mean => build_mean_token(&x, i as u32)?,
        });
        unified.push(g.with_features(x)?.with_domain(Some(i as u32)));
        maps.push(map);
    }

    let set = build_training_set_with_tokens(&unified, tokens.clone(), &plan, &mut stream(cfg.seed, "sampling"))?;
    let num_pairs = set.len();
    let num_holdout = (num_pairs as f64 * cfg.holdout_fraction).floor() as usize;
    let mut train_idx: Vec<usize> = (0..num_pairs - num_holdout).collect();
    let holdout_idx: Vec<usize> = (num_pairs - num_holdout..num_pairs).collect();
    if train_idx.is_empty() {
        return Err(Error::InvalidArgument(
            "no training pairs left after the hold-out".into(),
        ));
    }

    let mut init_rng = stream(cfg.seed, "init");
    let gcn = GcnParams::init(cfg.dim_target, cfg.hidden, &mut init_rng);
    let head = ProjHead::new(glorot_uniform(cfg.hidden, 2, &mut init_rng));
    let mut model = PretrainModel { gcn, head };
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut order_rng = stream(cfg.seed, "batches");
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let samples = batch.par_iter().map(|&i| set.merged(i)).collect::<Result<Vec<_>>>()?;
            let (loss, grads) = model.batch_loss_grad(&samples)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("pre-training loss at epoch {epoch}")));
            }
            loss_sum += loss.to_f64_lossy() * batch.len() as f64;
            let grad_refs: Vec<&Matrix<T>> = grads.iter().collect();
            adam.step(&mut model.tensors_mut(), &grad_refs)?;
        }
        let holdout_accuracy = if holdout_idx.is_empty() {
            None
        } else {
            Some(pair_accuracy(&model, &set, &holdout_idx)?)
        };
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / train_idx.len() as f64,
            holdout_accuracy,
        };
        on_epoch(&stats);
        history.push(stats);
        if let (Some(target), Some(acc)) = (cfg.target_holdout_accuracy, holdout_accuracy) {
            if acc >= target {
                break;
            }
        }
    }

    Ok(PretrainOutput {
        model,
        maps,
        tokens,
        plan,
        num_pairs,
        num_holdout,
        history,
        config: cfg.clone(),
    })
}

/// Fraction of pairs whose arg-max prediction matches the same-domain label.
fn pair_accuracy<T: Scalar>(model: &PretrainModel<T>, set: &TrainingSet<T>, idx: &[usize]) -> Result<f64> {
    let hits = idx
        .par_iter()
        .map(|&i| {
            let s = set.merged(i)?;
            let l = model.logits(&s)?;
            let pred = usize::from(l[1] > l[0]);
            Ok(usize::from(pred == s.label))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / idx.len() as f64)
}

/// Node embeddings `f(V, E, X·V_k)` of a source-style graph under a
/// pre-trained (or fine-tuned) encoder.
pub fn embed_domain<T: Scalar>(g: &FeatureGraph<T>, map: &DimMap<T>, gcn: &GcnParams<T>) -> Result<Matrix<T>> {
    let x = apply_map(g.features(), map)?;
    Ok(gcn_forward(&normalize_adjacency(g), &x, gcn)?.0)
}
