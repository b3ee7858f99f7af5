//! CULAN/M-estimation machinery: limit matrices, Huber-clipped optimal
//! influence functions, truncation tuning, the estimating-equation
//! solver, bias/risk functionals and Monte-Carlo validation.

mod estimate;
mod huber;
mod matrices;
mod mc;
mod tuning;

pub use estimate::{
    bias_functional, confidence_region, gross_error_sensitivity, m_estimate, risk_functional,
    ConfidenceRegion, EstimateResult,
};
pub use huber::{clip_interval, huber_clip, huber_clip_into};
pub use matrices::{asymptotic_cov, limit_matrices, LimitMatrices};
pub use mc::{mc_study, McConfig, McReport};
pub use tuning::{optimal_influence, solve_a_star, solve_c_star};

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::grid::SamplePath;
use crate::model::{ParamDriftModel, PathPrefix};

pub type PsiFn = Arc<dyn Fn(&PathPrefix, &[f64], &mut [f64]) + Send + Sync>;

/// Influence functional `ψ(s, x; α)` with optional truncation level and
/// standardizing matrix.
#[derive(Clone)]
pub struct InfluenceSpec {
    pub dim: usize,
    psi: PsiFn,
    pub clip_c: Option<f64>,
    pub a_matrix: Option<DMatrix<f64>>,
}

impl InfluenceSpec {
    pub fn from_fn(dim: usize, psi: PsiFn) -> Self {
        Self { dim, psi, clip_c: None, a_matrix: None }
    }

    /// The score `ψ = ȧ` (the MLE estimating function).
    pub fn score(model: &ParamDriftModel) -> Self {
        let m = model.clone();
        Self::from_fn(
            model.param_dim,
            Arc::new(move |p, alpha, out| m.drift_grad_into(p, alpha, out)),
        )
    }

    /// One-dimensional truncated score `ψ = [ȧ]_{-c}^{c}` (m = 1).
    pub fn clipped_score(model: &ParamDriftModel, c: f64) -> Self {
        assert_eq!(model.param_dim, 1, "clipped_score is a 1-D construction");
        let m = model.clone();
        let mut spec = Self::from_fn(
            1,
            Arc::new(move |p: &PathPrefix, alpha: &[f64], out: &mut [f64]| {
                m.drift_grad_into(p, alpha, out);
                out[0] = huber::clip_interval(out[0], -c, c);
            }),
        );
        spec.clip_c = Some(c);
        spec
    }

    pub fn eval_into(&self, p: &PathPrefix, alpha: &[f64], out: &mut [f64]) {
        (self.psi)(p, alpha, out)
    }

    pub fn eval(&self, p: &PathPrefix, alpha: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(p, alpha, &mut out);
        out
    }
}

/// Nonanticipative view of `path` at node `j`.
pub(crate) fn prefix_at<'a>(path: &'a SamplePath, j: usize) -> PathPrefix<'a> {
    let nodes = path.grid().nodes();
    let values = path.scalar_values();
    PathPrefix {
        times: &nodes[..j],
        values: &values[..j],
        s: nodes[j],
        y: values[j],
    }
}
