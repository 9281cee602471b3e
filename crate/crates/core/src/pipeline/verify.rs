//! Built-in gradient verification on a toy fixture: two synthetic source
//! domains, 8-node subgraphs, `d̃ = 10`, `h = 16`.

use super::finetune::build_finetune_data;
use super::Task;
use crate::contrastive::{build_domain_token, merge_pair, MergedSample, Subgraph};
use crate::dimred::{apply_map, fit_map};
use crate::error::{Error, Result};
use crate::graph::{ego_nodes, induced_subgraph, FeatureGraph};
use crate::io::synth::{generate_synthetic_domain, SynthDomainConfig};
use crate::linalg::Matrix;
use crate::neural::gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
use crate::neural::{AttentionParams, FinetuneData, FinetuneModel, GcnParams, PretrainModel, ProjHead};
use crate::rng::{glorot_uniform, stream};
use rand::seq::SliceRandom;
use rand::Rng;

pub const FIXTURE_DIM: usize = 10;
pub const FIXTURE_HIDDEN: usize = 16;
pub const FIXTURE_SUBGRAPH_NODES: usize = 8;
/// Unified features are scaled by this so the attention softmax over the
/// (summed) tokens stays away from saturation, where gradients vanish into
/// rounding noise.
const FEATURE_SCALE: f64 = 0.1;

fn unify(g: &FeatureGraph<f64>) -> Result<Matrix<f64>> {
    let mut x = apply_map(g.features(), &fit_map(g.features(), FIXTURE_DIM)?)?;
    x.scale(FEATURE_SCALE);
    Ok(x)
}

fn toy_domain(rotation: u64, nodes: usize, width: usize, seed: u64) -> Result<FeatureGraph<f64>> {
    let cfg = SynthDomainConfig {
        num_nodes: nodes,
        num_communities: 2,
        p_in: 0.4,
        p_out: 0.05,
        feature_dim: width,
        basis_rotation_seed: rotation,
        noise_std: 0.5,
    };
    generate_synthetic_domain(&cfg, seed)
}

/// First `FIXTURE_SUBGRAPH_NODES` nodes reached by BFS from a random center
/// whose component is large enough.
fn toy_subgraph<R: Rng>(g: &FeatureGraph<f64>, domain: u32, rng: &mut R) -> Result<Subgraph<f64>> {
    let mut centers: Vec<usize> = (0..g.num_nodes()).collect();
    centers.shuffle(rng);
    for c in centers {
        let mut nodes = ego_nodes(g, c, g.num_nodes())?;
        if nodes.len() >= FIXTURE_SUBGRAPH_NODES {
            nodes.truncate(FIXTURE_SUBGRAPH_NODES);
            return Ok(Subgraph {
                graph: induced_subgraph(g, &nodes)?,
                parent_domain: domain,
                source_node_ids: nodes,
            });
        }
    }
    Err(Error::InvalidGraph(
        "no component is large enough for the fixture".into(),
    ))
}

/// The toy pre-training batch (two positive and two negative merged pairs)
/// and a fine-tuning target with tokens of both source domains.
pub struct GradientFixture {
    pub samples: Vec<MergedSample<f64>>,
    pub tokens: Matrix<f64>,
    pub target: FeatureGraph<f64>,
    pub target_features: Matrix<f64>,
    pub train_ids: Vec<usize>,
    pub train_labels: Vec<usize>,
}

impl GradientFixture {
    pub fn new(seed: u64) -> Result<Self> {
        let mut rng = stream(seed, "gradcheck.fixture");
        let mut subgraphs = Vec::new();
        let mut tokens = Vec::new();
        for d in 0..2u32 {
            let g = toy_domain(1000 + d as u64, 24, 16, rng.random())?;
            let x = unify(&g)?;
            tokens.push(build_domain_token(&x, d)?);
            let g = g.with_features(x)?.with_domain(Some(d));
            subgraphs.push([toy_subgraph(&g, d, &mut rng)?, toy_subgraph(&g, d, &mut rng)?]);
        }
        let pairs = [((0, 0), (0, 1)), ((1, 0), (1, 1)), ((0, 0), (1, 0)), ((0, 1), (1, 1))];
        let samples = pairs
            .iter()
            .map(|&((da, ia), (db, ib))| merge_pair(&subgraphs[da][ia], &subgraphs[db][ib], &tokens[da], &tokens[db]))
            .collect::<Result<Vec<_>>>()?;
        let token_rows: Vec<Vec<f64>> = tokens.into_iter().map(|t| t.vector).collect();

        let target = toy_domain(2000, 20, 12, rng.random())?;
        let target_features = unify(&target)?;
        let labels = target.labels().expect("synthetic graphs are labelled");
        let mut train_ids: Vec<usize> = (0..target.num_nodes()).collect();
        train_ids.shuffle(&mut rng);
        train_ids.truncate(6);
        let train_labels = train_ids.iter().map(|&i| labels[i].expect("labelled")).collect();
        Ok(Self {
            samples,
            tokens: Matrix::from_rows(&token_rows)?,
            target,
            target_features,
            train_ids,
            train_labels,
        })
    }

    pub fn finetune_data(&self, task: Task) -> Result<FinetuneData<f64>> {
        let mut data = build_finetune_data(&self.target, self.target_features.clone(), self.tokens.clone(), task, 1)?;
        if let crate::neural::Instances::Graphs(egos) = &mut data.instances {
            egos.retain(|c, _| self.train_ids.contains(c));
        }
        Ok(data)
    }
}

/// Gradient-checks the pre-training loss and both fine-tuning losses (node
/// and graph task) on the fixture. Returns one named report per loss.
pub fn check_gradients(seed: u64, opts: &GradCheckOptions) -> Result<Vec<(String, GradCheckReport)>> {
    let fx = GradientFixture::new(seed)?;
    let mut rng = stream(seed, "gradcheck.init");
    let mut reports = Vec::new();

    let mut pre = PretrainModel {
        gcn: GcnParams::init(FIXTURE_DIM, FIXTURE_HIDDEN, &mut rng),
        head: ProjHead::new(glorot_uniform(FIXTURE_HIDDEN, 2, &mut rng)),
    };
    let (_, grads) = pre.batch_loss_grad(&fx.samples)?;
    let r = grad_check(
        &mut pre,
        &grads,
        |m| m.batch_loss(&fx.samples).expect("fixture loss"),
        opts,
        &mut stream(seed, "gradcheck.coords"),
    );
    reports.push(("pretrain".to_string(), r));

    let gcn = GcnParams::init(FIXTURE_DIM, FIXTURE_HIDDEN, &mut rng);
    let attention = AttentionParams::init(FIXTURE_DIM, 2, &mut rng)?;
    let head = ProjHead::new(glorot_uniform(FIXTURE_HIDDEN, 2, &mut rng));
    for task in [Task::Node, Task::Graph] {
        let data = fx.finetune_data(task)?;
        let mut model = FinetuneModel {
            gcn: gcn.clone(),
            attention: Some(attention.clone()),
            head: head.clone(),
        };
        let (_, grads) = model.loss_grad(&data, &fx.train_ids, &fx.train_labels)?;
        let r = grad_check(
            &mut model,
            &grads,
            |m| m.loss(&data, &fx.train_ids, &fx.train_labels).expect("fixture loss"),
            opts,
            &mut stream(seed, "gradcheck.coords"),
        );
        reports.push((format!("finetune.{task}"), r));
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_shapes() {
        let fx = GradientFixture::new(0).unwrap();
        assert_eq!(fx.samples.len(), 4);
        for s in &fx.samples {
            assert_eq!(s.graph.num_nodes(), 2 * FIXTURE_SUBGRAPH_NODES + 2);
            assert_eq!(s.graph.feature_dim(), FIXTURE_DIM);
        }
        assert_eq!(fx.samples.iter().map(|s| s.label).sum::<usize>(), 2);
        assert_eq!(fx.tokens.shape(), (2, FIXTURE_DIM));
    }

    #[test]
    fn analytic_gradients_match() {
        for seed in 0..20 {
            for (name, r) in check_gradients(seed, &GradCheckOptions::default()).unwrap() {
                assert!(r.passed, "seed {seed} {name}: {r:?}");
            }
        }
    }
}
