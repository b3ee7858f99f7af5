//! Parametric drift model for the small-noise diffusion
//! `dY_s = a(s, Y; α) ds + ε dw_s` and the functionals evaluated along it.

use std::sync::Arc;

use crate::error::{CoreError, Result};

/// Nonanticipative view of a path up to the current evaluation point.
///
/// `times`/`values` hold the accepted nodes strictly before the current
/// point; `(s, y)` is the point the functional is being evaluated at
/// (possibly an intermediate solver stage). Markovian functionals only
/// read `s` and `y`.
#[derive(Debug, Clone, Copy)]
pub struct PathPrefix<'a> {
    pub times: &'a [f64],
    pub values: &'a [f64],
    pub s: f64,
    pub y: f64,
}

impl<'a> PathPrefix<'a> {
    pub fn point(s: f64, y: f64) -> Self {
        Self { times: &[], values: &[], s, y }
    }
}

pub type DriftFn = Arc<dyn Fn(&PathPrefix, &[f64]) -> f64 + Send + Sync>;
pub type DriftGradFn = Arc<dyn Fn(&PathPrefix, &[f64], &mut [f64]) + Send + Sync>;

/// Drift functional `a(s, x; α)`, its α-gradient `ȧ`, the noise level ε
/// and the observation horizon.
#[derive(Clone)]
pub struct ParamDriftModel {
    pub param_dim: usize,
    pub epsilon: f64,
    pub t_end: f64,
    drift: DriftFn,
    drift_grad: DriftGradFn,
}

impl ParamDriftModel {
    pub fn new(
        param_dim: usize,
        epsilon: f64,
        t_end: f64,
        drift: DriftFn,
        drift_grad: DriftGradFn,
    ) -> Result<Self> {
        if param_dim == 0 {
            return Err(CoreError::InvalidArgument("param_dim must be >= 1".into()));
        }
        if !(epsilon > 0.0) {
            return Err(CoreError::InvalidArgument(format!(
                "epsilon must be > 0, got {epsilon}"
            )));
        }
        if !(t_end > 0.0) {
            return Err(CoreError::InvalidArgument("t_end must be > 0".into()));
        }
        let m = Self { param_dim, epsilon, t_end, drift, drift_grad };
        // probe for finiteness at a handful of points
        let alpha0 = vec![1.0; m.param_dim];
        for &(s, y) in &[(0.0, 0.0), (t_end * 0.5, 0.5), (t_end, 1.0)] {
            let p = PathPrefix::point(s, y);
            if !m.drift(&p, &alpha0).is_finite()
                || m.drift_grad(&p, &alpha0).iter().any(|g| !g.is_finite())
            {
                return Err(CoreError::InvalidArgument(format!(
                    "drift or gradient non-finite at probe (s={s}, y={y})"
                )));
            }
        }
        Ok(m)
    }

    pub fn drift(&self, p: &PathPrefix, alpha: &[f64]) -> f64 {
        (self.drift)(p, alpha)
    }

    pub fn drift_grad_into(&self, p: &PathPrefix, alpha: &[f64], out: &mut [f64]) {
        (self.drift_grad)(p, alpha, out)
    }

    pub fn drift_grad(&self, p: &PathPrefix, alpha: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.param_dim];
        self.drift_grad_into(p, alpha, &mut out);
        out
    }

    /// Same model with a different noise level.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(
            self.param_dim,
            epsilon,
            self.t_end,
            self.drift.clone(),
            self.drift_grad.clone(),
        )
    }
}

/// Ready-made drift models used throughout the tests and the CLI.
pub mod models {
    use super::*;

    /// `a(s, y; α) = α` (m = 1).
    pub fn constant_drift(epsilon: f64, t_end: f64) -> ParamDriftModel {
        ParamDriftModel::new(
            1,
            epsilon,
            t_end,
            Arc::new(|_p: &PathPrefix, a: &[f64]| a[0]),
            Arc::new(|_p: &PathPrefix, _a: &[f64], g: &mut [f64]| g[0] = 1.0),
        )
        .expect("constant drift model")
    }

    /// `a(s, y; α) = α₁ - α₂ y` (m = 2), the Ornstein-Uhlenbeck family.
    pub fn ou(epsilon: f64, t_end: f64) -> ParamDriftModel {
        ParamDriftModel::new(
            2,
            epsilon,
            t_end,
            Arc::new(|p: &PathPrefix, a: &[f64]| a[0] - a[1] * p.y),
            Arc::new(|p: &PathPrefix, _a: &[f64], g: &mut [f64]| {
                g[0] = 1.0;
                g[1] = -p.y;
            }),
        )
        .expect("ou model")
    }

    /// `a(s, y; α) = α (1 - y)` (m = 1), mean reversion towards 1.
    pub fn mean_revert(epsilon: f64, t_end: f64) -> ParamDriftModel {
        ParamDriftModel::new(
            1,
            epsilon,
            t_end,
            Arc::new(|p: &PathPrefix, a: &[f64]| a[0] * (1.0 - p.y)),
            Arc::new(|p: &PathPrefix, _a: &[f64], g: &mut [f64]| g[0] = 1.0 - p.y),
        )
        .expect("mean-revert model")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probes_reject_bad_models() {
        let r = ParamDriftModel::new(
            1,
            0.1,
            1.0,
            Arc::new(|_p: &PathPrefix, _a: &[f64]| f64::NAN),
            Arc::new(|_p: &PathPrefix, _a: &[f64], g: &mut [f64]| g[0] = 1.0),
        );
        assert!(r.is_err());
        assert!(ParamDriftModel::new(
            1,
            0.0,
            1.0,
            Arc::new(|_p: &PathPrefix, a: &[f64]| a[0]),
            Arc::new(|_p: &PathPrefix, _a: &[f64], g: &mut [f64]| g[0] = 1.0),
        )
        .is_err());
    }

    #[test]
    fn ou_gradient() {
        let m = models::ou(0.1, 1.0);
        let p = PathPrefix::point(0.3, 0.7);
        assert_eq!(m.drift(&p, &[1.0, 2.0]), 1.0 - 1.4);
        assert_eq!(m.drift_grad(&p, &[1.0, 2.0]), vec![1.0, -0.7]);
    }
}
