use crate::error::{Error, Result};
use crate::linalg::{axpy, Matrix};
use crate::scalar::Scalar;

/// Centroid statistics of embeddings grouped by domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Separation {
    pub centroids: Vec<Vec<f64>>,
    /// Mean Euclidean distance of each domain's rows to its own centroid.
    pub intra_mean: Vec<f64>,
    /// Centroid distance for each domain pair `(a, b)` with `a < b`.
    pub inter: Vec<((usize, usize), f64)>,
}

impl Separation {
    pub fn inter_distance(&self, a: usize, b: usize) -> Option<f64> {
        let key = (a.min(b), a.max(b));
        self.inter.iter().find(|(k, _)| *k == key).map(|(_, d)| *d)
    }
}

/// Statistics over domains `0..num_domains`; row `i` of `embeddings` belongs
/// to domain `domain_ids[i]`.
pub fn domain_separation<T: Scalar>(
    embeddings: &Matrix<T>,
    domain_ids: &[usize],
    num_domains: usize,
) -> Result<Separation> {
    if domain_ids.len() != embeddings.rows() {
        return Err(Error::Shape(format!(
            "{} domain ids for {} rows",
            domain_ids.len(),
            embeddings.rows()
        )));
    }
    if num_domains < 2 {
        return Err(Error::InvalidArgument("need at least 2 domains".into()));
    }
    let h = embeddings.cols();
    let mut sums = vec![vec![0.0f64; h]; num_domains];
    let mut counts = vec![0usize; num_domains];
    let row64 = |i: usize| -> Vec<f64> { embeddings.row(i).iter().map(|x| x.to_f64_lossy()).collect() };
    for (i, &d) in domain_ids.iter().enumerate() {
        if d >= num_domains {
            return Err(Error::InvalidArgument(format!(
                "domain {d} >= num_domains ({num_domains})"
            )));
        }
        axpy(&mut sums[d], 1.0, &row64(i));
        counts[d] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidArgument(format!("domain {empty} has no rows")));
    }
    let centroids: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let mut intra = vec![0.0; num_domains];
    for (i, &d) in domain_ids.iter().enumerate() {
        intra[d] += dist(&row64(i), &centroids[d]);
    }
    let intra_mean = intra.into_iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let mut inter = Vec::new();
    for a in 0..num_domains {
        for b in a + 1..num_domains {
            inter.push(((a, b), dist(&centroids[a], &centroids[b])));
        }
    }
    Ok(Separation {
        centroids,
        intra_mean,
        inter,
    })
}
