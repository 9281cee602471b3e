//! Pre-training corpus: random-walk subgraphs, domain tokens, merged pair
//! graphs and the positive/negative pair set.

use crate::error::{Error, Result};
use crate::graph::{induced_subgraph, FeatureGraph};
use crate::linalg::Matrix;
use crate::rng::StreamRng;
use crate::scalar::Scalar;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

/// Random-walk subgraph of a dimension-unified domain graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Subgraph<T> {
    pub graph: FeatureGraph<T>,
    pub parent_domain: u32,
    /// Ids in the parent graph, in first-visit order.
    pub source_node_ids: Vec<usize>,
}

/// Sum (or mean) of a domain's unified node features.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainToken<T> {
    pub domain_id: u32,
    pub vector: Vec<T>,
}

/// Two subgraphs joined through their domain token nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct MergedSample<T> {
    pub graph: FeatureGraph<T>,
    /// 1 when both subgraphs come from the same domain.
    pub label: usize,
    pub domain_pair: (u32, u32),
    pub token_node_ids: (usize, usize),
}

/// Sizes of the pair set: `K` subgraphs per domain, `N` negative pairs per
/// domain pair, walk length `L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairPlan {
    pub subgraphs_per_domain: usize,
    pub negatives_per_pair: usize,
    pub walk_length: usize,
}

impl PairPlan {
    pub fn new(subgraphs_per_domain: usize, negatives_per_pair: usize, walk_length: usize) -> Result<Self> {
        let plan = Self {
            subgraphs_per_domain,
            negatives_per_pair,
            walk_length,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// `N = ceil(M·C(K,2) / C(M,2))`, capped at `K²`, so both classes are
    /// about equally represented.
    pub fn balanced(num_domains: usize, subgraphs_per_domain: usize, walk_length: usize) -> Result<Self> {
        if num_domains < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 domains, got {num_domains}"
            )));
        }
        let k = subgraphs_per_domain;
        let positives = num_domains * k * k.saturating_sub(1) / 2;
        let pairs = num_domains * (num_domains - 1) / 2;
        let n = positives.div_ceil(pairs).clamp(1, (k * k).max(1));
        Self::new(k, n, walk_length)
    }

    pub fn validate(&self) -> Result<()> {
        let (k, n, l) = (self.subgraphs_per_domain, self.negatives_per_pair, self.walk_length);
        if k < 2 {
            return Err(Error::InvalidArgument(format!("K must be at least 2, got {k}")));
        }
        if n < 1 || n > k * k {
            return Err(Error::InvalidArgument(format!(
                "N must lie in 1..=K² ({}), got {n}",
                k * k
            )));
        }
        if l < 1 {
            return Err(Error::InvalidArgument("walk length must be at least 1".into()));
        }
        Ok(())
    }

    /// `M·C(K,2) + C(M,2)·N`
    pub fn total_pairs(&self, num_domains: usize) -> usize {
        let k = self.subgraphs_per_domain;
        num_domains * k * (k - 1) / 2 + num_domains * num_domains.saturating_sub(1) / 2 * self.negatives_per_pair
    }
}

/// Uniform random walk of `walk_length` steps from a uniform start node,
/// staying put on neighbourless nodes; returns the induced subgraph on the
/// distinct visited nodes.
pub fn sample_subgraph<T: Scalar, R: Rng + ?Sized>(
    g: &FeatureGraph<T>,
    walk_length: usize,
    rng: &mut R,
) -> Result<Subgraph<T>> {
    if g.num_nodes() == 0 {
        return Err(Error::Empty("cannot sample from an empty graph"));
    }
    let mut seen = vec![false; g.num_nodes()];
    let mut current = rng.random_range(0..g.num_nodes());
    seen[current] = true;
    let mut visited = vec![current];
    for _ in 0..walk_length {
        let nbrs = g.neighbors(current);
        if nbrs.is_empty() {
            continue;
        }
        current = nbrs[rng.random_range(0..nbrs.len())];
        if !seen[current] {
            seen[current] = true;
            visited.push(current);
        }
    }
    Ok(Subgraph {
        graph: induced_subgraph(g, &visited)?,
        parent_domain: g.domain_id().unwrap_or(0),
        source_node_ids: visited,
    })
}

/// Column-wise sum of the unified feature matrix.
pub fn build_domain_token<T: Scalar>(features: &Matrix<T>, domain_id: u32) -> Result<DomainToken<T>> {
    if features.rows() == 0 {
        return Err(Error::Empty("domain token of an empty feature matrix"));
    }
    Ok(DomainToken {
        domain_id,
        vector: features.column_sums(),
    })
}

/// Column-wise mean; a rescaled alternative to [`build_domain_token`].
pub fn build_mean_token<T: Scalar>(features: &Matrix<T>, domain_id: u32) -> Result<DomainToken<T>> {
    let mut t = build_domain_token(features, domain_id)?;
    let n = T::from_count(features.rows());
    t.vector.iter_mut().for_each(|x| *x /= n);
    Ok(t)
}

/// Node order: `a`'s nodes, `b`'s nodes, token of `a`, token of `b`.
/// Every `a` node links to token `a`, every `b` node to token `b`, and the two
/// tokens link to each other. Two token nodes exist even for same-domain pairs.
pub fn merge_pair<T: Scalar>(
    a: &Subgraph<T>,
    b: &Subgraph<T>,
    t_a: &DomainToken<T>,
    t_b: &DomainToken<T>,
) -> Result<MergedSample<T>> {
    let d = a.graph.feature_dim();
    if b.graph.feature_dim() != d || t_a.vector.len() != d || t_b.vector.len() != d {
        return Err(Error::Shape(format!(
            "merge widths disagree: {d}, {}, {}, {}",
            b.graph.feature_dim(),
            t_a.vector.len(),
            t_b.vector.len()
        )));
    }
    if t_a.domain_id != a.parent_domain || t_b.domain_id != b.parent_domain {
        return Err(Error::InvalidArgument(format!(
            "tokens ({}, {}) do not match subgraph domains ({}, {})",
            t_a.domain_id, t_b.domain_id, a.parent_domain, b.parent_domain
        )));
    }
    let na = a.graph.num_nodes();
    let nb = b.graph.num_nodes();
    let (ta, tb) = (na + nb, na + nb + 1);

    let mut edges = Vec::with_capacity(a.graph.num_edges() + b.graph.num_edges() + na + nb + 1);
    edges.extend_from_slice(a.graph.edges());
    edges.extend(b.graph.edges().iter().map(|&(u, v)| (u + na, v + na)));
    edges.extend((0..na).map(|u| (u, ta)));
    edges.extend((na..na + nb).map(|u| (u, tb)));
    edges.push((ta, tb));

    let mut features = Matrix::zeros(na + nb + 2, d);
    for u in 0..na {
        features.row_mut(u).copy_from_slice(a.graph.features().row(u));
    }
    for u in 0..nb {
        features.row_mut(na + u).copy_from_slice(b.graph.features().row(u));
    }
    features.row_mut(ta).copy_from_slice(&t_a.vector);
    features.row_mut(tb).copy_from_slice(&t_b.vector);

    Ok(MergedSample {
        graph: FeatureGraph::new(na + nb + 2, &edges, features)?,
        label: usize::from(a.parent_domain == b.parent_domain),
        domain_pair: (a.parent_domain, b.parent_domain),
        token_node_ids: (ta, tb),
    })
}

/// A pair of subgraphs, each addressed as `(domain index, subgraph index)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PairRef {
    pub a: (usize, usize),
    pub b: (usize, usize),
}

impl PairRef {
    pub fn label(&self) -> usize {
        usize::from(self.a.0 == self.b.0)
    }
}

/// The pair set with its subgraphs and tokens. Merged graphs are built on
/// demand by [`TrainingSet::merged`] so the corpus stays small in memory.
#[derive(Clone, Debug)]
pub struct TrainingSet<T> {
    pub subgraphs: Vec<Vec<Subgraph<T>>>,
    pub tokens: Vec<DomainToken<T>>,
    pub pairs: Vec<PairRef>,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn merged(&self, i: usize) -> Result<MergedSample<T>> {
        self.merge_ref(&self.pairs[i])
    }

    pub fn merge_ref(&self, p: &PairRef) -> Result<MergedSample<T>> {
        merge_pair(
            &self.subgraphs[p.a.0][p.a.1],
            &self.subgraphs[p.b.0][p.b.1],
            &self.tokens[p.a.0],
            &self.tokens[p.b.0],
        )
    }
}

/// Builds the pair set over unified domain graphs with summed tokens.
/// Domain `i` of the slice gets id `i`.
pub fn build_training_set<T: Scalar, R: Rng + ?Sized>(
    domains: &[FeatureGraph<T>],
    plan: &PairPlan,
    rng: &mut R,
) -> Result<TrainingSet<T>> {
    let tokens = domains
        .iter()
        .enumerate()
        .map(|(i, g)| build_domain_token(g.features(), i as u32))
        .collect::<Result<Vec<_>>>()?;
    build_training_set_with_tokens(domains, tokens, plan, rng)
}

/// As [`build_training_set`] with caller-supplied tokens (`tokens[i]` for
/// domain `i`).
///
/// All `C(K,2)` same-domain pairs per domain are positives; each domain pair
/// contributes `N` distinct `(m, n)` cells of the `K x K` grid as negatives.
/// The result is shuffled.
pub fn build_training_set_with_tokens<T: Scalar, R: Rng + ?Sized>(
    domains: &[FeatureGraph<T>],
    tokens: Vec<DomainToken<T>>,
    plan: &PairPlan,
    rng: &mut R,
) -> Result<TrainingSet<T>> {
    plan.validate()?;
    let m = domains.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 domains, got {m}")));
    }
    if tokens.len() != m {
        return Err(Error::InvalidArgument(format!(
            "{} tokens for {m} domains",
            tokens.len()
        )));
    }
    let k = plan.subgraphs_per_domain;

    let seeds: Vec<u64> = (0..m).map(|_| rng.random()).collect();
    let subgraphs = domains
        .par_iter()
        .zip(seeds)
        .enumerate()
        .map(|(i, (g, seed))| {
            let g = g.clone().with_domain(Some(i as u32));
            let mut local = StreamRng::seed_from_u64(seed);
            (0..k)
                .map(|_| sample_subgraph(&g, plan.walk_length, &mut local))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut pairs = Vec::with_capacity(plan.total_pairs(m));
    for i in 0..m {
        for a in 0..k {
            for b in a + 1..k {
                pairs.push(PairRef { a: (i, a), b: (i, b) });
            }
        }
    }
    for i in 0..m {
        for j in i + 1..m {
            let mut cells = index::sample(rng, k * k, plan.negatives_per_pair).into_vec();
            cells.sort_unstable();
            pairs.extend(cells.into_iter().map(|c| PairRef {
                a: (i, c / k),
                b: (j, c % k),
            }));
        }
    }
    pairs.shuffle(rng);

    Ok(TrainingSet {
        subgraphs,
        tokens,
        pairs,
    })
}
