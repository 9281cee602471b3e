use super::metrics::{evaluate_metrics, Metrics};
use super::split::FewShotSplit;
use super::Task;
use crate::dimred::{apply_map, fit_map, DimMap};
use crate::error::{Error, Result};
use crate::graph::{ego_nodes, induced_subgraph, normalize_adjacency, FeatureGraph};
use crate::io::checkpoint::Checkpoint;
use crate::linalg::Matrix;
use crate::neural::attention::{attention_enhance, HeadParams};
use crate::neural::objective::EgoInstance;
use crate::neural::{
    Adam, AdamConfig, AttentionParams, FinetuneData, FinetuneModel, GcnParams, Instances, ParamSet, ProjHead,
};
use crate::rng::{glorot_uniform, stream};
use crate::scalar::Scalar;
use rayon::prelude::*;
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub lr: f64,
    pub heads: usize,
    pub ego_hops: usize,
    pub seed: u64,
    /// Add the domain-attention output to the target features. Off gives
    /// the pre-trained encoder without enhancement.
    pub enhance: bool,
    /// Feature width of the from-scratch baseline (fine-tuning takes it
    /// from the checkpoint).
    pub dim_target: usize,
    /// Encoder width of the from-scratch baseline.
    pub hidden: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-3,
            heads: 2,
            ego_hops: 2,
            seed: 0,
            enhance: true,
            dim_target: 50,
            hidden: 256,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

/// A trained downstream model together with what inference needs: the
/// target-side dimension map and the source tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct FineTunedModel<T> {
    pub model: FinetuneModel<T>,
    /// Source tokens, one per row; empty for the baseline.
    pub tokens: Matrix<T>,
    pub target_map: DimMap<T>,
    pub task: Task,
    pub ego_hops: usize,
}

#[derive(Clone, Debug)]
pub struct FinetuneOutcome<T> {
    pub model: FineTunedModel<T>,
    /// Test metrics of the selected epoch.
    pub metrics: Metrics,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub train_losses: Vec<f64>,
}

/// Source tokens `token.0, token.1, ...` stacked as rows.
pub fn source_tokens<T: Scalar>(ckpt: &Checkpoint) -> Result<Matrix<T>> {
    let ids = ckpt.indexed("token");
    if ids.is_empty() {
        return Err(Error::MissingTensor("token.*".into()));
    }
    let rows = ids
        .iter()
        .map(|i| ckpt.vector::<T>(&format!("token.{i}")))
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&rows)
}

/// `X̃*_t`: fits a map on the target features to the tokens' width, applies
/// it, and adds the attention output over the checkpoint's tokens.
pub fn enhance_target<T: Scalar>(
    g_t: &FeatureGraph<T>,
    ckpt: &Checkpoint,
    theta: &AttentionParams<T>,
) -> Result<Matrix<T>> {
    let tokens = source_tokens::<T>(ckpt)?;
    let map = fit_map(g_t.features(), tokens.cols())?;
    let x = apply_map(g_t.features(), &map)?;
    Ok(attention_enhance(&x, &tokens, theta)?.0)
}

/// Target-graph inputs for the downstream loss. For the graph task every
/// labelled node gets its `ego_hops` ego network.
pub fn build_finetune_data<T: Scalar>(
    g_t: &FeatureGraph<T>,
    features: Matrix<T>,
    tokens: Matrix<T>,
    task: Task,
    ego_hops: usize,
) -> Result<FinetuneData<T>> {
    let instances = match task {
        Task::Node => Instances::Nodes,
        Task::Graph => {
            let centers = g_t.labeled_nodes();
            if centers.is_empty() {
                return Err(Error::InvalidArgument("graph task needs labelled nodes".into()));
            }
            let egos = centers
                .par_iter()
                .map(|&c| {
                    let nodes = ego_nodes(g_t, c, ego_hops)?;
                    let adj = normalize_adjacency(&induced_subgraph(g_t, &nodes)?);
                    Ok((c, EgoInstance { nodes, adj }))
                })
                .collect::<Result<BTreeMap<_, _>>>()?;
            Instances::Graphs(egos)
        }
    };
    Ok(FinetuneData {
        adj: normalize_adjacency(g_t),
        features,
        tokens,
        instances,
    })
}

/// Fine-tunes the pre-trained encoder with domain attention on `g_t`.
pub fn finetune<T: Scalar>(
    ckpt: &Checkpoint,
    g_t: &FeatureGraph<T>,
    task: Task,
    split: &FewShotSplit,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutcome<T>> {
    cfg.validate()?;
    let gcn = GcnParams::new(ckpt.matrix("gcn.W1")?, ckpt.matrix("gcn.W2")?)?;
    let tokens = source_tokens::<T>(ckpt)?;
    let dim = gcn.input_dim();
    if tokens.cols() != dim {
        return Err(Error::Shape(format!(
            "tokens have width {} but the encoder expects {dim}",
            tokens.cols()
        )));
    }
    let labels = split_labels(g_t, split)?;
    let num_classes = g_t.num_classes();

    let mut rng = stream(cfg.seed, "finetune.init");
    let attention = if cfg.enhance {
        Some(AttentionParams::init(dim, cfg.heads, &mut rng)?)
    } else {
        None
    };
    let head = ProjHead::new(glorot_uniform(gcn.output_dim(), num_classes, &mut rng));
    let model = FinetuneModel { gcn, attention, head };
    let target_map = fit_map(g_t.features(), dim)?;
    let x = apply_map(g_t.features(), &target_map)?;
    let data = build_finetune_data(g_t, x, tokens.clone(), task, cfg.ego_hops)?;
    train(model, tokens, target_map, data, task, split, &labels, num_classes, cfg)
}

/// Same protocol as [`finetune`] with a freshly initialized encoder and no
/// attention enhancement (`cfg.enhance` is ignored).
pub fn scratch_baseline<T: Scalar>(
    g_t: &FeatureGraph<T>,
    task: Task,
    split: &FewShotSplit,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutcome<T>> {
    cfg.validate()?;
    if cfg.dim_target == 0 || cfg.hidden == 0 {
        return Err(Error::InvalidArgument("dim_target and hidden must be positive".into()));
    }
    let labels = split_labels(g_t, split)?;
    let num_classes = g_t.num_classes();
    let mut rng = stream(cfg.seed, "scratch.init");
    let gcn = GcnParams::init(cfg.dim_target, cfg.hidden, &mut rng);
    let head = ProjHead::new(glorot_uniform(cfg.hidden, num_classes, &mut rng));
    let model = FinetuneModel {
        gcn,
        attention: None,
        head,
    };
    let target_map = fit_map(g_t.features(), cfg.dim_target)?;
    let x = apply_map(g_t.features(), &target_map)?;
    let tokens = Matrix::zeros(0, cfg.dim_target);
    let data = build_finetune_data(g_t, x, tokens.clone(), task, cfg.ego_hops)?;
    train(model, tokens, target_map, data, task, split, &labels, num_classes, cfg)
}

/// Labels of every split id, checking that each one is labelled.
fn split_labels<T: Scalar>(g_t: &FeatureGraph<T>, split: &FewShotSplit) -> Result<BTreeMap<usize, usize>> {
    let labels = g_t
        .labels()
        .ok_or_else(|| Error::InvalidArgument("target graph has no labels".into()))?;
    let mut out = BTreeMap::new();
    for &id in split.train_ids.iter().chain(&split.val_ids).chain(&split.test_ids) {
        let y = labels
            .get(id)
            .copied()
            .flatten()
            .ok_or_else(|| Error::InvalidArgument(format!("split id {id} is not a labelled node")))?;
        if out.insert(id, y).is_some() {
            return Err(Error::InvalidArgument(format!("split id {id} appears twice")));
        }
    }
    if split.train_ids.is_empty() || split.val_ids.is_empty() || split.test_ids.is_empty() {
        return Err(Error::InvalidArgument(
            "train, validation and test sets must be nonempty".into(),
        ));
    }
    Ok(out)
}

fn accuracy(preds: &[usize], truth: &[usize]) -> f64 {
    preds.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64
}

#[allow(clippy::too_many_arguments)]
fn train<T: Scalar>(
    mut model: FinetuneModel<T>,
    tokens: Matrix<T>,
    target_map: DimMap<T>,
    data: FinetuneData<T>,
    task: Task,
    split: &FewShotSplit,
    labels: &BTreeMap<usize, usize>,
    num_classes: usize,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutcome<T>> {
    let truth = |ids: &[usize]| ids.iter().map(|i| labels[i]).collect::<Vec<_>>();
    let (train_y, val_y, test_y) = (truth(&split.train_ids), truth(&split.val_ids), truth(&split.test_ids));
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut best: Option<(usize, f64, FinetuneModel<T>)> = None;
    let mut train_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let (loss, grads) = model.loss_grad(&data, &split.train_ids, &train_y)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("fine-tuning loss at epoch {epoch}")));
        }
        train_losses.push(loss.to_f64_lossy());
        let refs: Vec<&Matrix<T>> = grads.iter().collect();
        adam.step(&mut model.tensors_mut(), &refs)?;
        let val_acc = accuracy(&model.predict(&data, &split.val_ids)?, &val_y);
        if best.as_ref().is_none_or(|(_, b, _)| val_acc > *b) {
            best = Some((epoch, val_acc, model.clone()));
        }
    }

    let (best_epoch, best_val_accuracy, model) = best.expect("at least one epoch");
    let metrics = evaluate_metrics(&model.predict(&data, &split.test_ids)?, &test_y, num_classes)?;
    Ok(FinetuneOutcome {
        model: FineTunedModel {
            model,
            tokens,
            target_map,
            task,
            ego_hops: cfg.ego_hops,
        },
        metrics,
        best_epoch,
        best_val_accuracy,
        train_losses,
    })
}

impl<T: Scalar> FineTunedModel<T> {
    /// Parameter tensors plus `token.<i>`, `vmap.target`, `task` (0 node,
    /// 1 graph) and `ego_hops`.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        for (name, t) in self.model.names().into_iter().zip(self.model.tensors()) {
            ck.insert_matrix(name, t);
        }
        for i in 0..self.tokens.rows() {
            ck.insert_vector(format!("token.{i}"), self.tokens.row(i));
        }
        ck.insert_matrix("vmap.target", self.target_map.projection());
        let task = match self.task {
            Task::Node => 0.0,
            Task::Graph => 1.0,
        };
        ck.insert_vector::<f64>("task", &[task]);
        ck.insert_vector::<f64>("ego_hops", &[self.ego_hops as f64]);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let gcn = GcnParams::new(ck.matrix("gcn.W1")?, ck.matrix("gcn.W2")?)?;
        let mut heads = Vec::new();
        while ck.contains(&format!("attn.h{}.Wq", heads.len())) {
            let k = heads.len();
            heads.push(HeadParams {
                wq: ck.matrix(&format!("attn.h{k}.Wq"))?,
                wk: ck.matrix(&format!("attn.h{k}.Wk"))?,
                wv: ck.matrix(&format!("attn.h{k}.Wv"))?,
            });
        }
        let attention = if heads.is_empty() {
            None
        } else {
            Some(AttentionParams::new(heads)?)
        };
        let head = ProjHead::new(ck.matrix("proj_ft.W")?);
        let tokens = if ck.indexed("token").is_empty() {
            Matrix::zeros(0, gcn.input_dim())
        } else {
            source_tokens(ck)?
        };
        if attention.is_some() && tokens.rows() == 0 {
            return Err(Error::MissingTensor("token.*".into()));
        }
        let target_map = DimMap::from_projection(ck.matrix("vmap.target")?);
        let scalar = |name: &str| -> Result<f64> {
            match ck.vector::<f64>(name)?.as_slice() {
                [v] => Ok(*v),
                _ => Err(Error::Format(format!("`{name}` must hold one value"))),
            }
        };
        let task = match scalar("task")? {
            0.0 => Task::Node,
            1.0 => Task::Graph,
            v => return Err(Error::Format(format!("unknown task code {v}"))),
        };
        let hops = scalar("ego_hops")?;
        if hops < 0.0 || hops.fract() != 0.0 {
            return Err(Error::Format(format!("invalid ego_hops {hops}")));
        }
        Ok(Self {
            model: FinetuneModel { gcn, attention, head },
            tokens,
            target_map,
            task,
            ego_hops: hops as usize,
        })
    }

    /// Inputs for `g` under the stored target map.
    pub fn prepare(&self, g: &FeatureGraph<T>) -> Result<FinetuneData<T>> {
        let x = apply_map(g.features(), &self.target_map)?;
        build_finetune_data(g, x, self.tokens.clone(), self.task, self.ego_hops)
    }

    pub fn predict(&self, g: &FeatureGraph<T>, ids: &[usize]) -> Result<Vec<usize>> {
        self.model.predict(&self.prepare(g)?, ids)
    }

    /// Metrics over every labelled node of `g`.
    pub fn evaluate(&self, g: &FeatureGraph<T>) -> Result<Metrics> {
        let ids = g.labeled_nodes();
        if ids.is_empty() {
            return Err(Error::InvalidArgument("graph has no labelled nodes".into()));
        }
        let labels = g.labels().expect("labelled nodes imply labels");
        let truth: Vec<usize> = ids.iter().map(|&i| labels[i].expect("labelled")).collect();
        let num_classes = self.model.head.num_classes();
        evaluate_metrics(&self.predict(g, &ids)?, &truth, num_classes)
    }

    /// Node embeddings `f(V, E, X̃*)` of `g`.
    pub fn embeddings(&self, g: &FeatureGraph<T>) -> Result<Matrix<T>> {
        self.model.embeddings(&self.prepare(g)?)
    }
}
