//! Embedding CSV and metrics JSON writers.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Renders `node_id,domain,label,e0..e{h-1}`, one row per node. Absent
/// labels and domains are empty fields. Values use the shortest
/// representation that parses back to the same number.
pub fn write_embeddings<T: Scalar>(
    h: &Matrix<T>,
    labels: &[Option<usize>],
    domain_ids: &[Option<u32>],
) -> Result<String> {
    if labels.len() != h.rows() || domain_ids.len() != h.rows() {
        return Err(Error::Shape(format!(
            "{} embedding rows, {} labels, {} domain ids",
            h.rows(),
            labels.len(),
            domain_ids.len()
        )));
    }
    let mut out = String::from("node_id,domain,label");
    for j in 0..h.cols() {
        write!(out, ",e{j}").unwrap();
    }
    out.push('\n');
    for i in 0..h.rows() {
        write!(out, "{i},").unwrap();
        if let Some(d) = domain_ids[i] {
            write!(out, "{d}").unwrap();
        }
        out.push(',');
        if let Some(l) = labels[i] {
            write!(out, "{l}").unwrap();
        }
        for &x in h.row(i) {
            write!(out, ",{x}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn export_embeddings<T: Scalar>(
    h: &Matrix<T>,
    labels: &[Option<usize>],
    domain_ids: &[Option<u32>],
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(path, write_embeddings(h, labels, domain_ids)?)?;
    Ok(())
}

/// One line of machine-readable run output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub task: String,
    pub shots: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
}

impl MetricsRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_nodes_two_dims() {
        let h = Matrix::from_rows(&[[1.0, 0.5], [-2.0, 0.1], [0.0, 1e-20]]).unwrap();
        let csv = write_embeddings(&h, &[Some(1), None, Some(0)], &[Some(0), Some(0), None]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "node_id,domain,label,e0,e1");
        assert_eq!(lines[1], "0,0,1,1,0.5");
        assert_eq!(lines[2], "1,0,,-2,0.1");
        assert_eq!(lines[3], "2,,0,0,0.00000000000000000001");
    }

    #[test]
    fn empty_matrix_is_header_only() {
        let csv = write_embeddings(&Matrix::<f64>::zeros(0, 3), &[], &[]).unwrap();
        assert_eq!(csv, "node_id,domain,label,e0,e1,e2\n");
    }

    #[test]
    fn mismatched_rows_rejected() {
        assert!(write_embeddings(&Matrix::<f64>::zeros(2, 1), &[None], &[None, None]).is_err());
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = export_embeddings(&Matrix::<f64>::zeros(0, 1), &[], &[], "/nonexistent-dir/x.csv").unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }

    #[test]
    fn metrics_json_shape() {
        let m = MetricsRecord {
            task: "node".into(),
            shots: 1,
            seed: 7,
            accuracy: 0.5,
            macro_f1: 0.25,
        };
        assert_eq!(
            m.to_json(),
            r#"{"task":"node","shots":1,"seed":7,"accuracy":0.5,"macro_f1":0.25}"#
        );
    }
}
