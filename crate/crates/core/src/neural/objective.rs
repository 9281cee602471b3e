//! The two trained compositions.
//!
//! Pre-training: `CE(Proj_pre(ReadOut_sum(f(Merge(g_a, g_b)))), same_domain)`.
//! Fine-tuning: `mean_i CE(Proj_FT(h_i), y_i)` with `H = f(V, E, X + P)`,
//! where `P` is the domain attention output and `h_i` is either a node row of
//! `H` or the sum readout of an ego network.

use super::attention::{attention_backward, attention_enhance, AttentionCache, AttentionParams};
use super::gcn::{gcn_backward, gcn_forward, gcn_forward_pooled, gcn_pooled_backward, GcnParams};
use super::loss::cross_entropy;
use super::{ParamSet, ProjHead};
use crate::contrastive::MergedSample;
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, NormalizedAdjacency};
use crate::linalg::{outer, Matrix};
use crate::scalar::Scalar;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Samples per accumulation chunk. Fixed, so the summation order (and the
/// result) does not depend on the number of worker threads.
const CHUNK: usize = 8;

fn accumulate<T: Scalar>(acc: &mut Option<(T, Vec<Matrix<T>>)>, part: (T, Vec<Matrix<T>>)) {
    match acc {
        None => *acc = Some(part),
        Some((loss, grads)) => {
            *loss += part.0;
            for (a, g) in grads.iter_mut().zip(&part.1) {
                a.add_assign(g);
            }
        }
    }
}

/// Sums `f` over `items` chunk by chunk and then across chunks, both in
/// input order, and scales the total by `1/len`.
fn mean_in_order<I, T, F>(items: &[I], f: F) -> Result<(T, Vec<Matrix<T>>)>
where
    I: Sync,
    T: Scalar,
    F: Fn(&I) -> Result<(T, Vec<Matrix<T>>)> + Sync,
{
    let chunks = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = None;
            for item in chunk {
                accumulate(&mut acc, f(item)?);
            }
            Ok(acc.expect("chunks are nonempty"))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = None;
    for c in chunks {
        accumulate(&mut total, c);
    }
    let (loss, mut grads) = total.ok_or(Error::Empty("no instances"))?;
    let scale = T::one() / T::from_count(items.len());
    for g in &mut grads {
        g.scale(scale);
    }
    Ok((loss * scale, grads))
}

/// GCN encoder plus the binary same-domain head.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainModel<T> {
    pub gcn: GcnParams<T>,
    pub head: ProjHead<T>,
}

impl<T: Scalar> ParamSet<T> for PretrainModel<T> {
    fn names(&self) -> Vec<String> {
        let mut n = self.gcn.names();
        n.push("proj_pre.W".into());
        n
    }

    fn tensors(&self) -> Vec<&Matrix<T>> {
        vec![&self.gcn.w1, &self.gcn.w2, &self.head.w]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        vec![&mut self.gcn.w1, &mut self.gcn.w2, &mut self.head.w]
    }
}

impl<T: Scalar> PretrainModel<T> {
    /// Two-class logits for one merged sample; the readout covers every node,
    /// token nodes included.
    pub fn logits(&self, sample: &MergedSample<T>) -> Result<Vec<T>> {
        let adj = normalize_adjacency(&sample.graph);
        let (r, _) = gcn_forward_pooled(&adj, sample.graph.features(), &self.gcn)?;
        self.head.w.vec_matmul(&r)
    }

    pub fn sample_loss(&self, sample: &MergedSample<T>) -> Result<T> {
        Ok(cross_entropy(&self.logits(sample)?, sample.label)?.0)
    }

    /// Loss and gradients `[W1, W2, Proj_pre]` for one sample.
    pub fn sample_loss_grad(&self, sample: &MergedSample<T>) -> Result<(T, Vec<Matrix<T>>)> {
        let adj = normalize_adjacency(&sample.graph);
        let (r, cache) = gcn_forward_pooled(&adj, sample.graph.features(), &self.gcn)?;
        let logits = self.head.w.vec_matmul(&r)?;
        let (loss, g_logits) = cross_entropy(&logits, sample.label)?;
        let g_head = outer(&r, &g_logits);
        let g_r = self.head.w.matvec(&g_logits)?;
        let g = gcn_pooled_backward(&adj, &cache, &self.gcn, &g_r, false)?;
        Ok((loss, vec![g.w1, g.w2, g_head]))
    }

    /// Mean loss over a batch.
    pub fn batch_loss(&self, samples: &[MergedSample<T>]) -> Result<T> {
        if samples.is_empty() {
            return Err(Error::Empty("empty batch"));
        }
        let losses = samples
            .par_iter()
            .map(|s| self.sample_loss(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(losses.into_iter().sum::<T>() / T::from_count(samples.len()))
    }

    /// Mean loss and mean gradients over a batch.
    pub fn batch_loss_grad(&self, samples: &[MergedSample<T>]) -> Result<(T, Vec<Matrix<T>>)> {
        if samples.is_empty() {
            return Err(Error::Empty("empty batch"));
        }
        mean_in_order(samples, |s| self.sample_loss_grad(s))
    }
}

/// Ego network used as one graph-classification instance.
#[derive(Clone, Debug)]
pub struct EgoInstance<T> {
    /// Target-graph node ids, center first.
    pub nodes: Vec<usize>,
    pub adj: NormalizedAdjacency<T>,
}

/// What a prediction is made for.
#[derive(Clone, Debug)]
pub enum Instances<T> {
    /// One instance per node; `h_i` is row `i` of `H`.
    Nodes,
    /// One ego network per center node; `h_i` is the sum readout over it.
    Graphs(BTreeMap<usize, EgoInstance<T>>),
}

/// Everything about the target graph the fine-tuning loss needs.
#[derive(Clone, Debug)]
pub struct FinetuneData<T> {
    pub adj: NormalizedAdjacency<T>,
    /// Dimension-unified target features.
    pub features: Matrix<T>,
    /// Source domain tokens, one per row (may be empty when attention is off).
    pub tokens: Matrix<T>,
    pub instances: Instances<T>,
}

/// Encoder, optional domain attention and task head.
#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneModel<T> {
    pub gcn: GcnParams<T>,
    pub attention: Option<AttentionParams<T>>,
    pub head: ProjHead<T>,
}

impl<T: Scalar> ParamSet<T> for FinetuneModel<T> {
    fn names(&self) -> Vec<String> {
        let mut n = self.gcn.names();
        if let Some(a) = &self.attention {
            n.extend(a.names());
        }
        n.push("proj_ft.W".into());
        n
    }

    fn tensors(&self) -> Vec<&Matrix<T>> {
        let mut t = self.gcn.tensors();
        if let Some(a) = &self.attention {
            t.extend(a.tensors());
        }
        t.push(&self.head.w);
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut t = self.gcn.tensors_mut();
        if let Some(a) = &mut self.attention {
            t.extend(a.tensors_mut());
        }
        t.push(&mut self.head.w);
        t
    }
}

impl<T: Scalar> FinetuneModel<T> {
    /// `X̃*`: the unified features plus attention output (or the unified
    /// features alone when attention is off).
    pub fn enhanced_features(&self, data: &FinetuneData<T>) -> Result<(Matrix<T>, Option<AttentionCache<T>>)> {
        match &self.attention {
            Some(a) => {
                let (x, c) = attention_enhance(&data.features, &data.tokens, a)?;
                Ok((x, Some(c)))
            }
            None => Ok((data.features.clone(), None)),
        }
    }

    /// Node embeddings `H = f(V, E, X̃*)` of the whole target graph.
    pub fn embeddings(&self, data: &FinetuneData<T>) -> Result<Matrix<T>> {
        let (x, _) = self.enhanced_features(data)?;
        Ok(gcn_forward(&data.adj, &x, &self.gcn)?.0)
    }

    /// Instance representations `h_i` for the given instance ids.
    pub fn representations(&self, data: &FinetuneData<T>, ids: &[usize]) -> Result<Matrix<T>> {
        let (x, _) = self.enhanced_features(data)?;
        match &data.instances {
            Instances::Nodes => {
                let (h, _) = gcn_forward(&data.adj, &x, &self.gcn)?;
                check_ids(ids, h.rows())?;
                Ok(h.select_rows(ids))
            }
            Instances::Graphs(egos) => {
                let rows = ids
                    .par_iter()
                    .map(|id| {
                        let ego = ego_for(egos, *id)?;
                        Ok(gcn_forward_pooled(&ego.adj, &x.select_rows(&ego.nodes), &self.gcn)?.0)
                    })
                    .collect::<Result<Vec<_>>>()?;
                if rows.is_empty() {
                    return Ok(Matrix::zeros(0, self.gcn.output_dim()));
                }
                Matrix::from_rows(&rows)
            }
        }
    }

    pub fn logits(&self, data: &FinetuneData<T>, ids: &[usize]) -> Result<Matrix<T>> {
        self.representations(data, ids)?.matmul(&self.head.w)
    }

    /// Arg-max class per instance (lowest class id on ties).
    pub fn predict(&self, data: &FinetuneData<T>, ids: &[usize]) -> Result<Vec<usize>> {
        let logits = self.logits(data, ids)?;
        Ok((0..logits.rows())
            .map(|i| {
                let row = logits.row(i);
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }

    pub fn loss(&self, data: &FinetuneData<T>, ids: &[usize], labels: &[usize]) -> Result<T> {
        check_labels(ids, labels)?;
        let logits = self.logits(data, ids)?;
        let mut total = T::zero();
        for (i, &y) in labels.iter().enumerate() {
            total += cross_entropy(logits.row(i), y)?.0;
        }
        Ok(total / T::from_count(ids.len()))
    }

    /// Mean cross-entropy over `(ids, labels)` and gradients in
    /// [`ParamSet::tensors`] order.
    pub fn loss_grad(&self, data: &FinetuneData<T>, ids: &[usize], labels: &[usize]) -> Result<(T, Vec<Matrix<T>>)> {
        check_labels(ids, labels)?;
        let scale = T::one() / T::from_count(ids.len());
        let (x, attn_cache) = self.enhanced_features(data)?;

        let (loss, g_w1, g_w2, g_head, g_x) = match &data.instances {
            Instances::Nodes => {
                let (h, cache) = gcn_forward(&data.adj, &x, &self.gcn)?;
                check_ids(ids, h.rows())?;
                let mut g_h = Matrix::zeros(h.rows(), h.cols());
                let mut g_head = Matrix::zeros(self.head.w.rows(), self.head.w.cols());
                let mut loss = T::zero();
                for (&id, &y) in ids.iter().zip(labels) {
                    let logits = self.head.w.vec_matmul(h.row(id))?;
                    let (l, mut g) = cross_entropy(&logits, y)?;
                    loss += l;
                    g.iter_mut().for_each(|v| *v *= scale);
                    g_head.add_assign(&outer(h.row(id), &g));
                    let back = self.head.w.matvec(&g)?;
                    for (dst, &b) in g_h.row_mut(id).iter_mut().zip(&back) {
                        *dst += b;
                    }
                }
                let gg = gcn_backward(&data.adj, &cache, &self.gcn, &g_h)?;
                (loss * scale, gg.w1, gg.w2, g_head, gg.x)
            }
            Instances::Graphs(egos) => {
                let parts = ids
                    .par_iter()
                    .zip(labels.par_iter())
                    .map(|(&id, &y)| {
                        let ego = ego_for(egos, id)?;
                        let xe = x.select_rows(&ego.nodes);
                        let (r, cache) = gcn_forward_pooled(&ego.adj, &xe, &self.gcn)?;
                        let logits = self.head.w.vec_matmul(&r)?;
                        let (l, g) = cross_entropy(&logits, y)?;
                        let g_head = outer(&r, &g);
                        let g_r = self.head.w.matvec(&g)?;
                        let gg = gcn_pooled_backward(&ego.adj, &cache, &self.gcn, &g_r, true)?;
                        Ok((l, vec![gg.w1, gg.w2, g_head, gg.x]))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut g_x = Matrix::zeros(x.rows(), x.cols());
                let mut loss = T::zero();
                let mut acc: Option<Vec<Matrix<T>>> = None;
                for (&id, (l, mut g)) in ids.iter().zip(parts) {
                    loss += l;
                    let gx = g.pop().expect("input gradient");
                    for (k, &node) in ego_for(egos, id)?.nodes.iter().enumerate() {
                        for (dst, &v) in g_x.row_mut(node).iter_mut().zip(gx.row(k)) {
                            *dst += v;
                        }
                    }
                    match &mut acc {
                        None => acc = Some(g),
                        Some(a) => a.iter_mut().zip(&g).for_each(|(a, gi)| a.add_assign(gi)),
                    }
                }
                let mut acc = acc.ok_or(Error::Empty("no training instances"))?;
                acc.iter_mut().for_each(|g| g.scale(scale));
                g_x.scale(scale);
                let g_head = acc.pop().expect("head");
                let g_w2 = acc.pop().expect("w2");
                let g_w1 = acc.pop().expect("w1");
                (loss * scale, g_w1, g_w2, g_head, g_x)
            }
        };

        let mut grads = vec![g_w1, g_w2];
        if let (Some(a), Some(c)) = (&self.attention, &attn_cache) {
            let ga = attention_backward(&data.features, &data.tokens, a, c, &g_x)?;
            grads.extend(ga.heads.into_iter().flat_map(|h| [h.wq, h.wk, h.wv]));
        }
        grads.push(g_head);
        Ok((loss, grads))
    }
}

fn check_labels(ids: &[usize], labels: &[usize]) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::Empty("no training instances"));
    }
    if ids.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} instances, {} labels",
            ids.len(),
            labels.len()
        )));
    }
    Ok(())
}

fn check_ids(ids: &[usize], n: usize) -> Result<()> {
    match ids.iter().find(|&&i| i >= n) {
        Some(i) => Err(Error::InvalidArgument(format!("node {i} out of range for {n} nodes"))),
        None => Ok(()),
    }
}

fn ego_for<T>(egos: &BTreeMap<usize, EgoInstance<T>>, id: usize) -> Result<&EgoInstance<T>> {
    egos.get(&id)
        .ok_or_else(|| Error::InvalidArgument(format!("no ego network for node {id}")))
}
