//! Central finite-difference check of analytic gradients.

use super::ParamSet;
use crate::scalar::Scalar;
use rand::seq::index;
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Coordinates checked per tensor; smaller tensors are checked exhaustively.
    pub samples_per_tensor: usize,
    /// Lower bound on the relative-error denominator, so coordinates whose
    /// gradient is ~0 are compared in absolute terms. Central differences
    /// of a long computation carry ~1e-10 of rounding noise at the default
    /// step, which this floor keeps an order of magnitude under the
    /// tolerance.
    pub abs_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-5,
            samples_per_tensor: 200,
            abs_floor: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    /// Analytic and finite-difference values at the worst coordinate.
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub coordinates_checked: usize,
    pub passed: bool,
}

/// Compares `analytic` (one gradient per tensor of `params`, same order as
/// [`ParamSet::tensors`]) with central differences of `loss`.
///
/// Relative error per coordinate is `|a - n| / max(|n|, abs_floor)`, taking
/// the finite difference `n` as the reference.
pub fn grad_check<T, P, R>(
    params: &mut P,
    analytic: &[crate::linalg::Matrix<T>],
    mut loss: impl FnMut(&P) -> T,
    opts: &GradCheckOptions,
    rng: &mut R,
) -> GradCheckReport
where
    T: Scalar,
    P: ParamSet<T>,
    R: Rng + ?Sized,
{
    let names = params.names();
    assert_eq!(names.len(), analytic.len(), "one analytic gradient per tensor");
    let h = T::lit(opts.step);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        coordinates_checked: 0,
        passed: true,
    };
    for (t, name) in names.iter().enumerate() {
        let len = params.tensors()[t].as_slice().len();
        assert_eq!(len, analytic[t].as_slice().len(), "gradient shape for {name}");
        let coords: Vec<usize> = if len <= opts.samples_per_tensor {
            (0..len).collect()
        } else {
            let mut c = index::sample(rng, len, opts.samples_per_tensor).into_vec();
            c.sort_unstable();
            c
        };
        for idx in coords {
            let orig = params.tensors()[t].as_slice()[idx];
            params.tensors_mut()[t].as_mut_slice()[idx] = orig + h;
            let up = loss(params);
            params.tensors_mut()[t].as_mut_slice()[idx] = orig - h;
            let down = loss(params);
            params.tensors_mut()[t].as_mut_slice()[idx] = orig;

            let numeric = ((up - down) / (h + h)).to_f64_lossy();
            let a = analytic[t].as_slice()[idx].to_f64_lossy();
            let denom = numeric.abs().max(opts.abs_floor);
            let rel = (a - numeric).abs() / denom;
            report.coordinates_checked += 1;
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = rel;
                report.worst_param = name.clone();
                report.worst_index = idx;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    report.passed = report.max_rel_error < opts.tolerance;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::rng::stream;

    struct One(Matrix<f64>);

    impl ParamSet<f64> for One {
        fn names(&self) -> Vec<String> {
            vec!["w".into()]
        }
        fn tensors(&self) -> Vec<&Matrix<f64>> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Matrix<f64>> {
            vec![&mut self.0]
        }
    }

    fn half_square(p: &One) -> f64 {
        p.0.as_slice().iter().map(|x| x * x).sum::<f64>() / 2.0
    }

    #[test]
    fn quadratic_passes() {
        let mut p = One(Matrix::from_fn(30, 10, |i, j| {
            (i as f64 - 15.0) * 0.1 + j as f64 * 0.37
        }));
        let grad = p.0.clone();
        let r = grad_check(
            &mut p,
            &[grad],
            half_square,
            &GradCheckOptions::default(),
            &mut stream(0, "gc"),
        );
        assert!(r.max_rel_error < 1e-6, "{r:?}");
        assert!(r.passed);
        assert_eq!(r.coordinates_checked, 200);
    }

    #[test]
    fn corrupted_gradient_flagged() {
        let mut p = One(Matrix::from_fn(4, 3, |i, j| 1.0 + (i * 3 + j) as f64));
        let mut grad = p.0.clone();
        grad.scale(2.0);
        let r = grad_check(
            &mut p,
            &[grad],
            half_square,
            &GradCheckOptions::default(),
            &mut stream(0, "gc"),
        );
        assert!((r.max_rel_error - 1.0).abs() < 1e-6, "{r:?}");
        assert!(!r.passed);
        assert_eq!(r.worst_param, "w");
        assert_eq!(r.coordinates_checked, 12);
    }

    #[test]
    fn restores_parameters() {
        let mut p = One(Matrix::from_fn(3, 3, |i, j| (i + j) as f64));
        let before = p.0.clone();
        let grad = p.0.clone();
        grad_check(
            &mut p,
            &[grad],
            half_square,
            &GradCheckOptions::default(),
            &mut stream(0, "gc"),
        );
        assert_eq!(p.0, before);
    }
}
