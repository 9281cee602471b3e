//! Undirected attributed graphs, GCN adjacency normalization, readout and
//! subgraph extraction.

use crate::error::{Error, Result};
use crate::linalg::{axpy, Matrix};
use crate::scalar::Scalar;
use std::collections::{HashMap, VecDeque};

/// Undirected graph with a dense node feature matrix.
///
/// Edges are stored once, as `(u, v)` with `u < v`, sorted. Self-loops and
/// repeated pairs are dropped on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGraph<T> {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    features: Matrix<T>,
    labels: Option<Vec<Option<usize>>>,
    domain_id: Option<u32>,
}

impl<T: Scalar> FeatureGraph<T> {
    pub fn new(num_nodes: usize, edges: &[(usize, usize)], features: Matrix<T>) -> Result<Self> {
        if features.rows() != num_nodes {
            return Err(Error::InvalidGraph(format!(
                "feature matrix has {} rows but the graph has {num_nodes} nodes",
                features.rows()
            )));
        }
        let mut canonical = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge [{u},{v}] has an endpoint >= num_nodes ({num_nodes})"
                )));
            }
            if u != v {
                canonical.push((u.min(v), u.max(v)));
            }
        }
        canonical.sort_unstable();
        canonical.dedup();
        let mut neighbors = vec![Vec::new(); num_nodes];
        for &(u, v) in &canonical {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Ok(Self {
            num_nodes,
            edges: canonical,
            neighbors,
            features,
            labels: None,
            domain_id: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<Option<usize>>) -> Result<Self> {
        if labels.len() != self.num_nodes {
            return Err(Error::InvalidGraph(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.num_nodes
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_domain(mut self, domain_id: Option<u32>) -> Self {
        self.domain_id = domain_id;
        self
    }

    /// Same topology, labels and domain with a replacement feature matrix.
    pub fn with_features(&self, features: Matrix<T>) -> Result<Self> {
        if features.rows() != self.num_nodes {
            return Err(Error::Shape(format!(
                "replacement features have {} rows, graph has {} nodes",
                features.rows(),
                self.num_nodes
            )));
        }
        Ok(Self {
            features,
            ..self.clone()
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.neighbors[u].len()
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> Option<&[Option<usize>]> {
        self.labels.as_deref()
    }

    pub fn domain_id(&self) -> Option<u32> {
        self.domain_id
    }

    /// Ids of nodes carrying a label, ascending.
    pub fn labeled_nodes(&self) -> Vec<usize> {
        match &self.labels {
            Some(l) => (0..self.num_nodes).filter(|&i| l[i].is_some()).collect(),
            None => Vec::new(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().flatten().max().map(|m| m + 1))
            .unwrap_or(0)
    }
}

/// Sparse symmetric `D^{-1/2}(A+I)D^{-1/2}` in compressed row form.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency<T> {
    num_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> NormalizedAdjacency<T> {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored `(column, value)` pairs of row `u`, columns ascending.
    pub fn row(&self, u: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[u]..self.row_ptr[u + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, u: usize, v: usize) -> T {
        self.row(u).find(|&(c, _)| c == v).map_or(T::zero(), |(_, x)| x)
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.num_nodes, self.num_nodes);
        for u in 0..self.num_nodes {
            for (v, x) in self.row(u) {
                m[(u, v)] = x;
            }
        }
        m
    }

    /// `Â · X`
    pub fn matmul(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.rows() != self.num_nodes {
            return Err(Error::Shape(format!(
                "adjacency over {} nodes times matrix with {} rows",
                self.num_nodes,
                x.rows()
            )));
        }
        let mut out = Matrix::zeros(self.num_nodes, x.cols());
        for u in 0..self.num_nodes {
            let dst = out.row_mut(u);
            for (v, a) in self.row(u) {
                axpy(dst, a, x.row(v));
            }
        }
        Ok(out)
    }

    /// Row sums, which equal column sums since the matrix is symmetric.
    pub fn row_sums(&self) -> Vec<T> {
        (0..self.num_nodes).map(|u| self.row(u).map(|(_, x)| x).sum()).collect()
    }
}

pub fn normalize_adjacency<T: Scalar>(g: &FeatureGraph<T>) -> NormalizedAdjacency<T> {
    let n = g.num_nodes();
    let deg: Vec<T> = (0..n).map(|u| T::from_count(g.degree(u) + 1)).collect();
    // product is commutative, so (u,v) and (v,u) get identical bits
    let weight = |u: usize, v: usize| T::one() / (deg[u] * deg[v]).sqrt();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(n + 2 * g.num_edges());
    let mut values = Vec::with_capacity(n + 2 * g.num_edges());
    row_ptr.push(0);
    for u in 0..n {
        let mut inserted_self = false;
        for &v in g.neighbors(u) {
            if !inserted_self && v > u {
                col_idx.push(u);
                values.push(T::one() / deg[u]);
                inserted_self = true;
            }
            col_idx.push(v);
            values.push(weight(u, v));
        }
        if !inserted_self {
            col_idx.push(u);
            values.push(T::one() / deg[u]);
        }
        row_ptr.push(col_idx.len());
    }
    NormalizedAdjacency {
        num_nodes: n,
        row_ptr,
        col_idx,
        values,
    }
}

/// Component-wise sum of the selected rows of `h`.
pub fn readout_sum<T: Scalar>(h: &Matrix<T>, nodes: &[usize]) -> Result<Vec<T>> {
    if nodes.is_empty() {
        return Err(Error::Empty("readout over an empty node set"));
    }
    let mut out = vec![T::zero(); h.cols()];
    for &u in nodes {
        if u >= h.rows() {
            return Err(Error::InvalidArgument(format!(
                "node {u} out of range for {} rows",
                h.rows()
            )));
        }
        axpy(&mut out, T::one(), h.row(u));
    }
    Ok(out)
}

/// Subgraph induced by `nodes`, re-indexed `0..k` in the order given.
pub fn induced_subgraph<T: Scalar>(g: &FeatureGraph<T>, nodes: &[usize]) -> Result<FeatureGraph<T>> {
    if nodes.is_empty() {
        return Err(Error::Empty("induced subgraph over an empty node set"));
    }
    let mut index = HashMap::with_capacity(nodes.len());
    for (new, &old) in nodes.iter().enumerate() {
        if old >= g.num_nodes() {
            return Err(Error::InvalidArgument(format!(
                "node {old} out of range for a graph with {} nodes",
                g.num_nodes()
            )));
        }
        if index.insert(old, new).is_some() {
            return Err(Error::InvalidArgument(format!("node {old} listed twice")));
        }
    }
    let mut edges = Vec::new();
    for (new_u, &old_u) in nodes.iter().enumerate() {
        for &old_v in g.neighbors(old_u) {
            if let Some(&new_v) = index.get(&old_v) {
                if new_u < new_v {
                    edges.push((new_u, new_v));
                }
            }
        }
    }
    let sub = FeatureGraph::new(nodes.len(), &edges, g.features().select_rows(nodes))?.with_domain(g.domain_id());
    match g.labels() {
        Some(l) => sub.with_labels(nodes.iter().map(|&u| l[u]).collect()),
        None => Ok(sub),
    }
}

/// Nodes within `hops` of `center`, in BFS order starting with `center`.
pub fn ego_nodes<T: Scalar>(g: &FeatureGraph<T>, center: usize, hops: usize) -> Result<Vec<usize>> {
    if center >= g.num_nodes() {
        return Err(Error::InvalidArgument(format!(
            "center {center} out of range for a graph with {} nodes",
            g.num_nodes()
        )));
    }
    let mut dist = vec![usize::MAX; g.num_nodes()];
    dist[center] = 0;
    let mut order = vec![center];
    let mut queue = VecDeque::from([center]);
    while let Some(u) = queue.pop_front() {
        if dist[u] == hops {
            continue;
        }
        for &v in g.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                order.push(v);
                queue.push_back(v);
            }
        }
    }
    Ok(order)
}

/// Induced subgraph on the `hops`-neighbourhood of `center`; the center is node 0.
pub fn ego_network<T: Scalar>(g: &FeatureGraph<T>, center: usize, hops: usize) -> Result<FeatureGraph<T>> {
    induced_subgraph(g, &ego_nodes(g, center, hops)?)
}
