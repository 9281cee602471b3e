//! Feature-width unification by truncated SVD.
//!
//! A [`DimMap`] holds the top right singular vectors of one graph's feature
//! matrix. Graphs with different raw widths are each fitted separately and
//! land in a shared width `target_dim`.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 80;

#[derive(Clone, Debug, PartialEq)]
pub struct DimMap<T> {
    projection: Matrix<T>,
}

impl<T: Scalar> DimMap<T> {
    /// Wraps a stored `source_dim x target_dim` projection.
    pub fn from_projection(projection: Matrix<T>) -> Self {
        Self { projection }
    }

    pub fn source_dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn target_dim(&self) -> usize {
        self.projection.cols()
    }

    pub fn projection(&self) -> &Matrix<T> {
        &self.projection
    }

    /// `‖X v_k‖` for each kept direction, i.e. the singular values of `x`
    /// the fit selected (zero for padded columns).
    pub fn implied_singular_values(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        let mapped = apply_map(x, self)?;
        Ok((0..mapped.cols())
            .map(|j| mapped.column(j).iter().map(|&v| v * v).sum::<T>().sqrt())
            .collect())
    }
}

/// Fits the top-`target_dim` right singular subspace of `x`.
///
/// Columns come out in nonincreasing singular-value order (ties: lower
/// original index first). Each column is sign-fixed so its largest-magnitude
/// entry is nonnegative. Columns past the numerical rank or past the source
/// width are zero.
pub fn fit_map<T: Scalar>(x: &Matrix<T>, target_dim: usize) -> Result<DimMap<T>> {
    let (n, d) = x.shape();
    if n == 0 || d == 0 {
        return Err(Error::Empty("fit_map needs at least one row and one column"));
    }
    if target_dim == 0 {
        return Err(Error::InvalidArgument("target dimension must be positive".into()));
    }

    // (singular value, right singular vector) pairs, unsorted.
    let mut pairs: Vec<(T, Vec<T>)> = Vec::new();
    if n >= d {
        // Orthogonalize the columns of X; the accumulated rotation is V.
        let mut cols: Vec<Vec<T>> = (0..d).map(|j| x.column(j)).collect();
        let mut v: Vec<Vec<T>> = (0..d)
            .map(|j| (0..d).map(|i| if i == j { T::one() } else { T::zero() }).collect())
            .collect();
        hestenes(&mut cols, &mut v);
        for (c, vj) in cols.iter().zip(v) {
            pairs.push((dot(c, c).sqrt(), vj));
        }
    } else {
        // Orthogonalize the columns of Xᵀ; they converge to V·Σ.
        let mut cols: Vec<Vec<T>> = (0..n).map(|i| x.row(i).to_vec()).collect();
        let mut u: Vec<Vec<T>> = (0..n)
            .map(|j| (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect())
            .collect();
        hestenes(&mut cols, &mut u);
        for c in cols {
            let s = dot(&c, &c).sqrt();
            let dir = if s > T::zero() {
                c.iter().map(|&v| v / s).collect()
            } else {
                vec![T::zero(); d]
            };
            pairs.push((s, dir));
        }
    }

    let sigma_max = pairs.iter().map(|p| p.0).fold(T::zero(), T::max);
    let tol = sigma_max * T::epsilon() * T::from_count(n.max(d));

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    // stable: equal singular values keep the lower original index first
    order.sort_by(|&a, &b| pairs[b].0.partial_cmp(&pairs[a].0).unwrap_or(std::cmp::Ordering::Equal));

    let mut projection = Matrix::zeros(d, target_dim);
    for (k, &idx) in order.iter().take(target_dim).enumerate() {
        let (s, dir) = &pairs[idx];
        if *s <= tol || *s == T::zero() {
            continue;
        }
        let flip = sign_flip(dir);
        for i in 0..d {
            projection[(i, k)] = if flip { -dir[i] } else { dir[i] };
        }
    }
    Ok(DimMap { projection })
}

/// `X · projection`
pub fn apply_map<T: Scalar>(x: &Matrix<T>, map: &DimMap<T>) -> Result<Matrix<T>> {
    if x.cols() != map.source_dim() {
        return Err(Error::Shape(format!(
            "features have width {}, map expects {}",
            x.cols(),
            map.source_dim()
        )));
    }
    x.matmul(&map.projection)
}

/// True when the largest-magnitude entry (first on ties) is negative.
fn sign_flip<T: Scalar>(v: &[T]) -> bool {
    let mut best = T::zero();
    let mut best_val = T::zero();
    for &x in v {
        if x.abs() > best {
            best = x.abs();
            best_val = x;
        }
    }
    best_val < T::zero()
}

/// One-sided cyclic Jacobi: rotates column pairs of `cols` until they are
/// mutually orthogonal, applying the same rotations to `acc`.
fn hestenes<T: Scalar>(cols: &mut [Vec<T>], acc: &mut [Vec<T>]) {
    let p = cols.len();
    let eps = T::epsilon();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..p {
            for j in i + 1..p {
                let alpha = dot(&cols[i], &cols[i]);
                let beta = dot(&cols[j], &cols[j]);
                let gamma = dot(&cols[i], &cols[j]);
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(cols, i, j, c, s);
                rotate(acc, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
}

fn rotate<T: Scalar>(cols: &mut [Vec<T>], i: usize, j: usize, c: T, s: T) {
    let (lo, hi) = cols.split_at_mut(j);
    let (a, b) = (&mut lo[i], &mut hi[0]);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xi, yj) = (*x, *y);
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn random(n: usize, d: usize, seed: u64) -> Matrix<f64> {
        let mut rng = stream(seed, "dimred-test");
        Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn diagonal_matrix_keeps_leading_axes() {
        let x = Matrix::from_rows(&[[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let map = fit_map(&x, 2).unwrap();
        assert_eq!(
            map.projection(),
            &Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap()
        );
        let y = apply_map(&x, &map).unwrap();
        assert_eq!(y, Matrix::from_rows(&[[3.0, 0.0], [0.0, 2.0], [0.0, 0.0]]).unwrap());
    }

    #[test]
    fn zero_matrix_maps_to_zero() {
        let x = Matrix::<f64>::zeros(4, 3);
        let map = fit_map(&x, 2).unwrap();
        assert!(map.projection().as_slice().iter().all(|&v| v == 0.0));
        assert!(apply_map(&x, &map).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pads_beyond_source_width_and_rank() {
        let x = random(5, 3, 1);
        let map = fit_map(&x, 6).unwrap();
        assert_eq!(map.projection().shape(), (3, 6));
        for j in 3..6 {
            assert!(map.projection().column(j).iter().all(|&v| v == 0.0));
        }
        // rank 1: one nonzero column
        let r1 = Matrix::from_fn(4, 3, |i, j| ((i + 1) * (j + 2)) as f64);
        let m1 = fit_map(&r1, 3).unwrap();
        let nonzero = (0..3)
            .filter(|&j| m1.projection().column(j).iter().any(|&v| v != 0.0))
            .count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn columns_orthonormal_and_sign_fixed() {
        for (n, d) in [(7, 4), (3, 6), (5, 5)] {
            let x = random(n, d, (n * 10 + d) as u64);
            let map = fit_map(&x, 4).unwrap();
            let p = map.projection();
            let g = p.t_matmul(p).unwrap();
            let rank = n.min(d).min(4);
            for i in 0..4 {
                for j in 0..4 {
                    let want = if i == j && i < rank { 1.0 } else { 0.0 };
                    assert!((g[(i, j)] - want).abs() < 1e-10, "gram[{i},{j}] = {}", g[(i, j)]);
                }
                if i < rank {
                    assert!(!sign_flip(&p.column(i)));
                }
            }
            let s = map.implied_singular_values(&x).unwrap();
            assert!(s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn lossless_when_source_not_wider_than_target() {
        let x = random(6, 3, 4);
        let map = fit_map(&x, 5).unwrap();
        let back = apply_map(&x, &map).unwrap().matmul_t(map.projection()).unwrap();
        for (a, b) in back.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let map = fit_map(&random(4, 3, 2), 2).unwrap();
        assert!(apply_map(&random(4, 2, 3), &map).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let x: Matrix<f32> = random(6, 4, 9).cast();
        let map = fit_map(&x, 2).unwrap();
        let g = map.projection().t_matmul(map.projection()).unwrap();
        assert!((g[(0, 0)] - 1.0).abs() < 1e-5 && g[(0, 1)].abs() < 1e-5);
    }
}
