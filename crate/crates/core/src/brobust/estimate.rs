//! The M-estimating equation, bias and risk functionals under bounded
//! contamination, gross-error sensitivity and confidence regions.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{CoreError, Result};
use crate::grid::{trapezoid, SamplePath, TimeGrid};
use crate::model::ParamDriftModel;
use crate::sde::{solve_limit_ode, ContaminationSpec};

use super::{asymptotic_cov, limit_matrices, prefix_at, InfluenceSpec};

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_MAX_BACKTRACK: usize = 40;

/// Solution of the estimating equation together with the asymptotic
/// diagnostics evaluated at the estimate.
#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub alpha_hat: Vec<f64>,
    /// `V(ψ; α̂)` on the observation grid.
    pub cov: DMatrix<f64>,
    /// Gross-error sensitivity `γ*(ψ; α̂)`.
    pub gamma_star: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// `Σ_j ψ(s_j, Y; α)(ΔY_j - a(s_j, Y; α)Δs_j)`.
fn estimating_eq(
    model: &ParamDriftModel,
    psi: &InfluenceSpec,
    path: &SamplePath,
    alpha: &[f64],
) -> DVector<f64> {
    let nodes = path.grid().nodes();
    let vals = path.scalar_values();
    let m = psi.dim;
    let mut f = DVector::zeros(m);
    let mut buf = vec![0.0; m];
    for j in 0..path.grid().n_steps() {
        let p = prefix_at(path, j);
        let a = model.drift(&p, alpha);
        psi.eval_into(&p, alpha, &mut buf);
        let w = (vals[j + 1] - vals[j]) - a * (nodes[j + 1] - nodes[j]);
        for r in 0..m {
            f[r] += buf[r] * w;
        }
    }
    f
}

/// Solve the M-estimating equation by damped Newton iteration with a
/// central finite-difference Jacobian, started at `alpha0`.
pub fn m_estimate(
    model: &ParamDriftModel,
    psi: &InfluenceSpec,
    path: &SamplePath,
    alpha0: &[f64],
) -> Result<EstimateResult> {
    let m = model.param_dim;
    if psi.dim != m || alpha0.len() != m {
        return Err(CoreError::InvalidArgument(
            "influence and initial guess must match the parameter dimension".into(),
        ));
    }
    if path.dim() != 1 {
        return Err(CoreError::InvalidPath("observed path must be scalar".into()));
    }

    let mut alpha = alpha0.to_vec();
    let mut f = estimating_eq(model, psi, path, &alpha);
    let mut res = f.norm();
    let tol = 1e-12 * (1.0 + res);
    let mut iterations = 0;

    while res > tol {
        if iterations >= NEWTON_MAX_ITER {
            return Err(CoreError::NoConvergence { iterations, residual: res });
        }
        iterations += 1;

        let mut jac = DMatrix::zeros(m, m);
        for c in 0..m {
            let step = 1e-6 * (1.0 + alpha[c].abs());
            let mut ap = alpha.clone();
            let mut am = alpha.clone();
            ap[c] += step;
            am[c] -= step;
            let fp = estimating_eq(model, psi, path, &ap);
            let fm = estimating_eq(model, psi, path, &am);
            for r in 0..m {
                jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * step);
            }
        }
        let delta = jac
            .lu()
            .solve(&(-&f))
            .ok_or(CoreError::Singular("estimating-equation Jacobian"))?;

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..NEWTON_MAX_BACKTRACK {
            let trial: Vec<f64> = alpha
                .iter()
                .zip(delta.iter())
                .map(|(a, d)| a + lambda * d)
                .collect();
            let ft = estimating_eq(model, psi, path, &trial);
            let rt = ft.norm();
            if rt < res || rt <= tol {
                alpha = trial;
                f = ft;
                res = rt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            // full-precision stall: treat a tiny Newton step as converged
            let step_norm = delta.norm();
            let alpha_norm = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
            if step_norm <= 1e-12 * (1.0 + alpha_norm) {
                break;
            }
            return Err(CoreError::NoConvergence { iterations, residual: res });
        }
    }

    let lm = limit_matrices(model, psi, &alpha, path.grid())?;
    let cov = asymptotic_cov(&lm)?;
    let gamma_star = gross_error_sensitivity(model, psi, &alpha, path.grid())?;
    Ok(EstimateResult { alpha_hat: alpha, cov, gamma_star, iterations, residual: res })
}

/// Bias under contamination: `b(ψ, h; α) = ∫ ψ h ds` along the limit
/// path, and the standardized bias `b̃ = γ₀⁻¹ b`.
pub fn bias_functional(
    model: &ParamDriftModel,
    psi: &InfluenceSpec,
    h: &ContaminationSpec,
    alpha: &[f64],
    grid: &TimeGrid,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let m = model.param_dim;
    let limit = solve_limit_ode(model, alpha, grid)?;
    let n_nodes = grid.n_nodes();
    let mut integrand = vec![0.0; n_nodes * m];
    let mut buf = vec![0.0; m];
    for j in 0..n_nodes {
        let p = prefix_at(&limit, j);
        let hv = h.eval(&p, alpha)?;
        psi.eval_into(&p, alpha, &mut buf);
        for r in 0..m {
            integrand[j * m + r] = buf[r] * hv;
        }
    }
    let mut b = DVector::zeros(m);
    let mut col = vec![0.0; n_nodes];
    for r in 0..m {
        for j in 0..n_nodes {
            col[j] = integrand[j * m + r];
        }
        b[r] = trapezoid(grid.nodes(), &col);
    }
    let lm = limit_matrices(model, psi, alpha, grid)?;
    let inv = lm
        .small_gamma
        .try_inverse()
        .ok_or(CoreError::Singular("γ₀"))?;
    let b_tilde = &inv * &b;
    Ok((b, b_tilde))
}

/// Mean-square risk `D(ψ, h; α) = |b̃|² + tr V(ψ; α)`.
pub fn risk_functional(
    model: &ParamDriftModel,
    psi: &InfluenceSpec,
    h: &ContaminationSpec,
    alpha: &[f64],
    grid: &TimeGrid,
) -> Result<f64> {
    let (_, b_tilde) = bias_functional(model, psi, h, alpha, grid)?;
    let lm = limit_matrices(model, psi, alpha, grid)?;
    let v = asymptotic_cov(&lm)?;
    Ok(b_tilde.norm_squared() + v.trace())
}

/// `γ*(ψ; α) = sup_s |γ₀⁻¹ ψ(s, Y⁰(α); α)|` over the grid nodes.
pub fn gross_error_sensitivity(
    model: &ParamDriftModel,
    psi: &InfluenceSpec,
    alpha: &[f64],
    grid: &TimeGrid,
) -> Result<f64> {
    let lm = limit_matrices(model, psi, alpha, grid)?;
    let inv = lm
        .small_gamma
        .try_inverse()
        .ok_or(CoreError::Singular("γ₀"))?;
    let limit = solve_limit_ode(model, alpha, grid)?;
    let m = model.param_dim;
    let mut buf = vec![0.0; m];
    let mut sup: f64 = 0.0;
    for j in 0..grid.n_nodes() {
        let p = prefix_at(&limit, j);
        psi.eval_into(&p, alpha, &mut buf);
        let z = &inv * DVector::from_column_slice(&buf);
        if !z.iter().all(|v| v.is_finite()) {
            return Err(CoreError::NonFiniteIntegrand { node: j, s: p.s });
        }
        sup = sup.max(z.norm());
    }
    Ok(sup)
}

/// Ellipsoidal asymptotic confidence region
/// `{α : ε⁻²(α - α̂)' V⁻¹ (α - α̂) <= χ²_γ(m)}`.
#[derive(Debug, Clone)]
pub struct ConfidenceRegion {
    pub center: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub cov_inv: DMatrix<f64>,
    pub epsilon: f64,
    pub level: f64,
    pub quantile: f64,
}

impl ConfidenceRegion {
    pub fn contains(&self, alpha: &[f64]) -> bool {
        let d = DVector::from_iterator(
            self.center.len(),
            alpha.iter().zip(&self.center).map(|(a, c)| a - c),
        );
        let q = (&d.transpose() * &self.cov_inv * &d)[(0, 0)];
        q <= self.epsilon * self.epsilon * self.quantile
    }

    /// Half-width of the scalar interval (m = 1 only).
    pub fn half_width(&self) -> Result<f64> {
        if self.center.len() != 1 {
            return Err(CoreError::Unsupported(
                "half_width is defined for scalar parameters".into(),
            ));
        }
        Ok(self.epsilon * (self.quantile * self.cov[(0, 0)]).sqrt())
    }
}

/// Confidence region at level `γ` around `α̂`, using `V(ψ; α̂)`.
pub fn confidence_region(
    model: &ParamDriftModel,
    psi: &InfluenceSpec,
    alpha_hat: &[f64],
    grid: &TimeGrid,
    level: f64,
) -> Result<ConfidenceRegion> {
    if !(level > 0.0 && level < 1.0) {
        return Err(CoreError::InvalidArgument(format!(
            "confidence level must be in (0, 1), got {level}"
        )));
    }
    let m = model.param_dim;
    let lm = limit_matrices(model, psi, alpha_hat, grid)?;
    let cov = asymptotic_cov(&lm)?;
    let cov_inv = cov
        .clone()
        .try_inverse()
        .ok_or(CoreError::Singular("V(ψ; α̂)"))?;
    let chi2 = ChiSquared::new(m as f64)
        .map_err(|e| CoreError::InvalidArgument(e.to_string()))?;
    Ok(ConfidenceRegion {
        center: alpha_hat.to_vec(),
        cov,
        cov_inv,
        epsilon: model.epsilon,
        level,
        quantile: chi2.inverse_cdf(level),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brobust::optimal_influence;
    use crate::model::models;
    use crate::sde::simulate_small_noise;
    use crate::seed::SeedSpec;

    #[test]
    fn constant_drift_mle_is_terminal_over_t() {
        // ψ = 1: the estimating equation reads Y_t - α t = 0.
        let model = models::constant_drift(0.1, 2.0);
        let grid = TimeGrid::uniform(2.0, 200).unwrap();
        let seed = SeedSpec::new(41);
        let path = simulate_small_noise(&model, &[0.6], &grid, &seed, 0).unwrap();
        let psi = InfluenceSpec::score(&model);
        let est = m_estimate(&model, &psi, &path, &[0.0]).unwrap();
        let exact = path.terminal() / 2.0;
        assert!((est.alpha_hat[0] - exact).abs() < 1e-12);
        assert!(est.iterations <= 3);
    }

    #[test]
    fn ou_score_matches_linear_system_oracle() {
        // ψ = ȧ and a linear in α: the equation is a 2x2 linear system
        // G α = r with G = Σ ψψ'Δs, r = Σ ψ ΔY.
        let model = models::ou(0.1, 1.0);
        let grid = TimeGrid::uniform(1.0, 300).unwrap();
        let seed = SeedSpec::new(42);
        let path = simulate_small_noise(&model, &[1.2, 0.8], &grid, &seed, 3).unwrap();
        let psi = InfluenceSpec::score(&model);
        let est = m_estimate(&model, &psi, &path, &[0.5, 0.5]).unwrap();

        let nodes = grid.nodes();
        let vals = path.scalar_values();
        let mut g: DMatrix<f64> = DMatrix::zeros(2, 2);
        let mut r: DVector<f64> = DVector::zeros(2);
        for j in 0..grid.n_steps() {
            let ds = nodes[j + 1] - nodes[j];
            let dy = vals[j + 1] - vals[j];
            let psi_j = [1.0, -vals[j]];
            for a in 0..2 {
                r[a] += psi_j[a] * dy;
                for b in 0..2 {
                    g[(a, b)] += psi_j[a] * psi_j[b] * ds;
                }
            }
        }
        let oracle = g.lu().solve(&r).unwrap();
        assert!((est.alpha_hat[0] - oracle[0]).abs() < 1e-8, "{:?}", est.alpha_hat);
        assert!((est.alpha_hat[1] - oracle[1]).abs() < 1e-8);
    }

    #[test]
    fn estimate_is_consistent_as_noise_shrinks() {
        let truth = [1.0, 1.0];
        let grid = TimeGrid::uniform(1.0, 400).unwrap();
        let seed = SeedSpec::new(43);
        let mut prev_err = f64::INFINITY;
        for eps in [0.2, 0.05, 0.0125] {
            let model = models::ou(eps, 1.0);
            let psi = InfluenceSpec::score(&model);
            let mut err = 0.0;
            for k in 0..20u64 {
                let path = simulate_small_noise(&model, &truth, &grid, &seed, k).unwrap();
                let est = m_estimate(&model, &psi, &path, &[0.5, 0.5]).unwrap();
                err += ((est.alpha_hat[0] - 1.0).powi(2) + (est.alpha_hat[1] - 1.0).powi(2))
                    .sqrt();
            }
            err /= 20.0;
            assert!(err < prev_err, "eps={eps}: {err} vs {prev_err}");
            prev_err = err;
        }
        // errors at the smallest noise are O(ε)
        assert!(prev_err < 0.15, "{prev_err}");
    }

    #[test]
    fn bias_of_score_under_constant_shift() {
        // ψ = 1, h ≡ η on a ≡ α over [0, t]: b = ηt, γ₀ = t, b̃ = η.
        let t = 2.0;
        let eta = 0.7;
        let model = models::constant_drift(0.1, t);
        let grid = TimeGrid::uniform(t, 100).unwrap();
        let psi = InfluenceSpec::score(&model);
        let h = ContaminationSpec::constant(eta, 1.0).unwrap();
        let (b, bt) = bias_functional(&model, &psi, &h, &[0.3], &grid).unwrap();
        assert!((b[0] - eta * t).abs() < 1e-12);
        assert!((bt[0] - eta).abs() < 1e-12);
        // D = η² + tr V = η² + 1/t
        let d = risk_functional(&model, &psi, &h, &[0.3], &grid).unwrap();
        assert!((d - (eta * eta + 1.0 / t)).abs() < 1e-12);
    }

    #[test]
    fn optimal_influence_lowers_sensitivity() {
        // on the mean-revert model the clipped optimal ψ trades a bounded
        // sensitivity (<= c) against the score's larger one.
        let model = models::mean_revert(0.1, 1.0);
        let grid = TimeGrid::uniform(1.0, 300).unwrap();
        let alpha = [1.5];
        let score = InfluenceSpec::score(&model);
        let gs_score = gross_error_sensitivity(&model, &score, &alpha, &grid).unwrap();
        let c = 0.9 * gs_score;
        let robust = optimal_influence(&model, &alpha, c, &grid).unwrap();
        let gs_robust = gross_error_sensitivity(&model, &robust, &alpha, &grid).unwrap();
        assert!(gs_robust <= c * (1.0 + 1e-9));
        assert!(gs_robust < gs_score);
    }

    #[test]
    fn gross_error_sensitivity_constant_drift() {
        // score over [0, t]: γ₀ = t, sup|ψ| = 1, γ* = 1/t.
        let t = 4.0;
        let model = models::constant_drift(0.1, t);
        let grid = TimeGrid::uniform(t, 100).unwrap();
        let psi = InfluenceSpec::score(&model);
        let gs = gross_error_sensitivity(&model, &psi, &[0.2], &grid).unwrap();
        assert!((gs - 1.0 / t).abs() < 1e-12);
    }

    #[test]
    fn chi_square_quantiles_match_closed_forms() {
        // df = 1, γ = 0.95: 3.8414588207; df = 2: -2 ln(1-γ) exactly.
        let model1 = models::constant_drift(0.1, 1.0);
        let grid = TimeGrid::uniform(1.0, 100).unwrap();
        let psi1 = InfluenceSpec::score(&model1);
        let cr1 = confidence_region(&model1, &psi1, &[0.5], &grid, 0.95).unwrap();
        assert!((cr1.quantile - 3.841458820694124).abs() < 1e-9, "{}", cr1.quantile);

        let model2 = models::ou(0.1, 1.0);
        let psi2 = InfluenceSpec::score(&model2);
        let cr2 = confidence_region(&model2, &psi2, &[1.0, 1.0], &grid, 0.95).unwrap();
        assert!((cr2.quantile - (-2.0 * 0.05f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn scalar_region_geometry() {
        // a ≡ α over [0, 1]: V = 1, half-width = ε √χ²_γ(1).
        let eps = 0.05;
        let model = models::constant_drift(eps, 1.0);
        let grid = TimeGrid::uniform(1.0, 100).unwrap();
        let psi = InfluenceSpec::score(&model);
        let cr = confidence_region(&model, &psi, &[0.5], &grid, 0.95).unwrap();
        let hw = cr.half_width().unwrap();
        assert!((hw - eps * 3.841458820694124f64.sqrt()).abs() < 1e-10);
        assert!(cr.contains(&[0.5 + 0.99 * hw]));
        assert!(!cr.contains(&[0.5 + 1.01 * hw]));
    }

    #[test]
    fn bad_level_rejected() {
        let model = models::constant_drift(0.1, 1.0);
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        let psi = InfluenceSpec::score(&model);
        assert!(confidence_region(&model, &psi, &[0.5], &grid, 1.0).is_err());
        assert!(confidence_region(&model, &psi, &[0.5], &grid, 0.0).is_err());
    }
}
