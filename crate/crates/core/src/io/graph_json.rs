//! `mdgcl-graph-v1` JSON graph files.
//!
//! ```json
//! {"schema":"mdgcl-graph-v1","domain":"0","num_nodes":2,
//!  "edges":[[0,1]],"features":[[1.0,0.0],[0.0,1.0]],"labels":[0,null]}
//! ```
//!
//! `domain` is a free string; when it parses as an unsigned integer it becomes
//! the graph's domain id. `labels` is optional.

use crate::error::{Error, Result};
use crate::graph::FeatureGraph;
use crate::linalg::Matrix;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const GRAPH_SCHEMA: &str = "mdgcl-graph-v1";

#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    schema: String,
    domain: String,
    num_nodes: usize,
    edges: Vec<[usize; 2]>,
    features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<Option<usize>>>,
}

pub fn graph_from_json(text: &str) -> Result<FeatureGraph<f64>> {
    let file: GraphFile = serde_json::from_str(text)?;
    if file.schema != GRAPH_SCHEMA {
        return Err(Error::Format(format!(
            "schema `{}` is not `{GRAPH_SCHEMA}`",
            file.schema
        )));
    }
    if file.features.len() != file.num_nodes {
        return Err(Error::InvalidGraph(format!(
            "{} feature rows for {} nodes",
            file.features.len(),
            file.num_nodes
        )));
    }
    let features =
        Matrix::from_rows(&file.features).map_err(|e| Error::InvalidGraph(format!("ragged features: {e}")))?;
    let edges: Vec<(usize, usize)> = file.edges.iter().map(|e| (e[0], e[1])).collect();
    let mut g = FeatureGraph::new(file.num_nodes, &edges, features)?.with_domain(file.domain.parse().ok());
    if let Some(labels) = file.labels {
        g = g.with_labels(labels)?;
    }
    Ok(g)
}

pub fn graph_to_json(g: &FeatureGraph<f64>) -> String {
    let file = GraphFile {
        schema: GRAPH_SCHEMA.to_string(),
        domain: g.domain_id().map(|d| d.to_string()).unwrap_or_default(),
        num_nodes: g.num_nodes(),
        edges: g.edges().iter().map(|&(u, v)| [u, v]).collect(),
        features: (0..g.num_nodes()).map(|i| g.features().row(i).to_vec()).collect(),
        labels: g.labels().map(<[_]>::to_vec),
    };
    serde_json::to_string(&file).expect("graph serializes")
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<FeatureGraph<f64>> {
    graph_from_json(&fs::read_to_string(path)?)
}

pub fn save_graph(g: &FeatureGraph<f64>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, graph_to_json(g))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_loads() {
        let g = graph_from_json(
            r#"{"schema":"mdgcl-graph-v1","domain":"cora","num_nodes":2,"edges":[[0,1]],"features":[[1,0],[0,1]]}"#,
        )
        .unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.domain_id(), None);
        assert!(g.labels().is_none());
    }

    #[test]
    fn bad_edge_is_named() {
        let err = graph_from_json(
            r#"{"schema":"mdgcl-graph-v1","domain":"x","num_nodes":3,"edges":[[0,5]],"features":[[1],[2],[3]]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidGraph(_)));
        assert!(err.to_string().contains("[0,5]"), "{err}");
    }

    #[test]
    fn ragged_rows_and_wrong_schema_rejected() {
        let ragged = r#"{"schema":"mdgcl-graph-v1","domain":"x","num_nodes":2,"edges":[],"features":[[1,2],[3]]}"#;
        assert!(matches!(graph_from_json(ragged), Err(Error::InvalidGraph(_))));
        let schema = r#"{"schema":"other","domain":"x","num_nodes":1,"edges":[],"features":[[1]]}"#;
        assert!(matches!(graph_from_json(schema), Err(Error::Format(_))));
        assert!(matches!(graph_from_json("{not json"), Err(Error::Parse(_))));
    }

    #[test]
    fn save_then_load_is_identity() {
        let g = FeatureGraph::new(
            3,
            &[(0, 1), (1, 2)],
            Matrix::from_rows(&[[0.1, -2.5e-300], [1.0 / 3.0, 7.0], [f64::MAX, 0.0]]).unwrap(),
        )
        .unwrap()
        .with_labels(vec![Some(1), None, Some(0)])
        .unwrap()
        .with_domain(Some(4));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        save_graph(&g, &path).unwrap();
        assert_eq!(load_graph(&path).unwrap(), g);
    }
}
