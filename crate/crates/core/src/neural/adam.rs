use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Adam with bias correction. Moment buffers are created on the first step
/// and must keep the same shapes afterwards.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Matrix<T>], grads: &[&Matrix<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "parameter {i} is {:?} but its gradient is {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter {i}")));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.shape() != p.shape())
        {
            return Err(Error::Shape("parameter shapes changed between Adam steps".into()));
        }

        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let lr = T::lit(c.lr);
        let eps = T::lit(c.eps);
        let t = self.step as i32;
        let bc1 = T::one() - T::lit(c.beta1.powi(t));
        let bc2 = T::one() - T::lit(c.beta2.powi(t));
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let it = p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice()));
            for ((w, &gi), (mi, vi)) in it {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut w = Matrix::from_rows(&[[1.0, -2.0]]).unwrap();
        let before = w.clone();
        let mut opt = Adam::new(AdamConfig::default());
        opt.step(&mut [&mut w], &[&Matrix::zeros(1, 2)]).unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut w = Matrix::<f64>::from_rows(&[[0.0, 0.0, 0.0]]).unwrap();
        let g = Matrix::<f64>::from_rows(&[[3.0, -0.02, 1e3]]).unwrap();
        let mut opt = Adam::new(AdamConfig::with_lr(0.01));
        opt.step(&mut [&mut w], &[&g]).unwrap();
        // m̂ = g, v̂ = g², so Δ = -lr·g/(|g| + ε)
        for (wi, gi) in w.as_slice().iter().zip(g.as_slice()) {
            let want = -0.01 * gi / (gi.abs() + 1e-8);
            assert!((wi - want).abs() < 1e-15);
            assert!((wi + 0.01 * gi.signum()).abs() < 1e-8);
        }
    }

    #[test]
    fn matches_scalar_trace() {
        let (lr, b1, b2, eps) = (0.05, 0.9, 0.999, 1e-8);
        let g = 0.7;
        let (mut w, mut m, mut v) = (1.5f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            w -= lr * mh / (vh.sqrt() + eps);
        }
        let mut p = Matrix::from_rows(&[[1.5]]).unwrap();
        let gm = Matrix::from_rows(&[[g]]).unwrap();
        let mut opt = Adam::new(AdamConfig {
            lr,
            beta1: b1,
            beta2: b2,
            eps,
        });
        opt.step(&mut [&mut p], &[&gm]).unwrap();
        opt.step(&mut [&mut p], &[&gm]).unwrap();
        assert!((p[(0, 0)] - w).abs() < 1e-12);
        assert_eq!(opt.steps_taken(), 2);
    }

    #[test]
    fn non_finite_gradient_fails_without_update() {
        let mut w = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let mut opt = Adam::new(AdamConfig::default());
        let bad = Matrix::from_rows(&[[0.1, f64::INFINITY]]).unwrap();
        assert!(matches!(opt.step(&mut [&mut w], &[&bad]), Err(Error::NonFinite(_))));
        assert_eq!(w, Matrix::from_rows(&[[1.0, 2.0]]).unwrap());
        assert_eq!(opt.steps_taken(), 0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut w = Matrix::<f64>::zeros(2, 2);
        let mut opt = Adam::new(AdamConfig::default());
        assert!(opt.step(&mut [&mut w], &[&Matrix::zeros(1, 2)]).is_err());
    }
}
