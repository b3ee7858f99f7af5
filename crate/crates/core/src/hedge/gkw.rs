//! Galtchouk-Kunita-Watanabe decomposition of `H z̃₀/z̃_T` against the
//! two-component martingale `U = (z̃₀/z̃, M⁰ z̃₀/z̃)'` under `Q̃`,
//! computed by weighted least squares on a path ensemble.
//!
//! The predictable integrands are spanned by a state basis per time
//! step; all steps are fitted jointly in one regression so that finite
//! sample correlation between step increments cannot leak into the
//! coefficients. The Q̃ weighting enters through the terminal density
//! `z̃_T²/z̃₀`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::grid::TimeGrid;
use crate::sde::SVPaths;

use super::density::exponential_path;
use super::HedgeProblem;

const SVD_RTOL: f64 = 1e-10;

/// State basis `(t, x, y) → (b₁, …, b_B)` for the predictable
/// regression coefficients.
#[derive(Clone)]
pub struct Basis {
    pub dim: usize,
    pub eval: Arc<dyn Fn(f64, f64, f64, &mut [f64]) + Send + Sync>,
}

impl Basis {
    pub fn new(dim: usize, eval: Arc<dyn Fn(f64, f64, f64, &mut [f64]) + Send + Sync>) -> Self {
        Self { dim, eval }
    }

    /// The default basis `{1, x, y, xy}`.
    pub fn default_xy() -> Self {
        Self::new(
            4,
            Arc::new(|_t, x, y, out: &mut [f64]| {
                out[0] = 1.0;
                out[1] = x;
                out[2] = y;
                out[3] = x * y;
            }),
        )
    }

    /// `{1, x, y, xy}` plus hinge features `(x - κ)⁺` per knot, for
    /// targets with kinked or sigmoid x-dependence (option deltas).
    pub fn hinge_xy(knots: &[f64]) -> Self {
        let knots = knots.to_vec();
        Self::new(
            4 + knots.len(),
            Arc::new(move |_t, x, y, out: &mut [f64]| {
                out[0] = 1.0;
                out[1] = x;
                out[2] = y;
                out[3] = x * y;
                for (i, &k) in knots.iter().enumerate() {
                    out[4 + i] = (x - k).max(0.0);
                }
            }),
        )
    }

    /// Quadratic extension `{1, x, y, xy, x², y²}`.
    pub fn quadratic_xy() -> Self {
        Self::new(
            6,
            Arc::new(|_t, x, y, out: &mut [f64]| {
                out[0] = 1.0;
                out[1] = x;
                out[2] = y;
                out[3] = x * y;
                out[4] = x * x;
                out[5] = y * y;
            }),
        )
    }
}

/// Result of the decomposition: per-step coefficient matrices mapping
/// the basis to `(ψ⁰, ψ¹)`, plus ensemble diagnostics.
#[derive(Clone)]
pub struct GKWData {
    pub grid: TimeGrid,
    pub basis: Basis,
    /// One `2 × B` matrix per grid step.
    pub coeffs: Vec<DMatrix<f64>>,
    /// `E^Q̃(H z̃₀/z̃_T)`.
    pub mean_term: f64,
    /// Steps whose regression was rank-deficient (null directions get
    /// zero coefficients).
    pub degenerate_steps: usize,
    /// Weighted RMS of the residual `L_T` over the fitting ensemble.
    pub residual_l2: f64,
    /// Weighted standard deviation of the target, for scale reference.
    pub target_std: f64,
}

impl GKWData {
    /// `(ψ⁰, ψ¹)` at step `j` for the given state.
    pub fn psi_at(&self, j: usize, t: f64, x: f64, y: f64) -> (f64, f64) {
        let b = self.basis.dim;
        let mut vals = vec![0.0; b];
        (self.basis.eval)(t, x, y, &mut vals);
        let c = &self.coeffs[j];
        let mut out = [0.0; 2];
        for (row, o) in out.iter_mut().enumerate() {
            for k in 0..b {
                *o += c[(row, k)] * vals[k];
            }
        }
        (out[0], out[1])
    }

    /// Coefficient paths `(ψ⁰_j, ψ¹_j)` along a simulated path, one
    /// entry per grid step.
    pub fn psi_paths(&self, paths: &SVPaths) -> (Vec<f64>, Vec<f64>) {
        let nodes = self.grid.nodes();
        let mut p0 = Vec::with_capacity(self.coeffs.len());
        let mut p1 = Vec::with_capacity(self.coeffs.len());
        for j in 0..self.coeffs.len() {
            let (a, b) = self.psi_at(j, nodes[j], paths.x.at(j, 0), paths.y.at(j, 0));
            p0.push(a);
            p1.push(b);
        }
        (p0, p1)
    }
}

/// `U_j = (1/N_j, M⁰_j/N_j)` along one path (the z̃₀ factors cancel).
pub(crate) fn u_path(paths: &SVPaths, n: &[f64]) -> Vec<(f64, f64)> {
    (0..n.len())
        .map(|j| (1.0 / n[j], paths.m0.at(j, 0) / n[j]))
        .collect()
}

/// Fit the decomposition on a simulated ensemble.
pub fn gkw_decompose(
    problem: &HedgeProblem,
    ensemble: &[SVPaths],
    basis: &Basis,
) -> Result<GKWData> {
    let n_paths = ensemble.len();
    if n_paths < 2 {
        return Err(CoreError::InvalidArgument(
            "gkw_decompose needs at least 2 paths (10⁴+ recommended)".into(),
        ));
    }
    let grid = ensemble[0].x.grid().clone();
    if ensemble.iter().any(|p| p.x.grid() != &grid) {
        return Err(CoreError::InvalidPath("ensemble paths must share a grid".into()));
    }
    let n_steps = grid.n_steps();
    let nodes = grid.nodes();
    let b = basis.dim;
    let dim = 2 * b;

    let mut u_all = Vec::with_capacity(n_paths);
    let mut target = Vec::with_capacity(n_paths);
    let mut weights = Vec::with_capacity(n_paths);
    for paths in ensemble {
        let n = exponential_path(problem, paths);
        let nt = *n.last().unwrap();
        let h = (problem.payoff)(paths);
        if !h.is_finite() || !nt.is_finite() {
            return Err(CoreError::InvalidPath("non-finite payoff or density sample".into()));
        }
        u_all.push(u_path(paths, &n));
        target.push(h / nt);
        weights.push(nt * nt);
    }
    let w_mean = weights.iter().sum::<f64>() / n_paths as f64;
    for w in &mut weights {
        *w /= w_mean;
    }
    let w_sum: f64 = weights.iter().sum();
    let mean_term = weights
        .iter()
        .zip(&target)
        .map(|(w, t)| w * t)
        .sum::<f64>()
        / w_sum;
    let centered: Vec<f64> = target.iter().map(|t| t - mean_term).collect();
    let target_var = weights
        .iter()
        .zip(&centered)
        .map(|(w, c)| w * c * c)
        .sum::<f64>()
        / w_sum;

    // joint regression over all steps: one row per path holding every
    // step's `basis ⊗ ΔU` block
    let total = n_steps * dim;
    let fill_row = |i: usize, row: &mut [f64]| {
        let paths = &ensemble[i];
        let mut bvals = vec![0.0; b];
        for j in 0..n_steps {
            (basis.eval)(nodes[j], paths.x.at(j, 0), paths.y.at(j, 0), &mut bvals);
            let du0 = u_all[i][j + 1].0 - u_all[i][j].0;
            let du1 = u_all[i][j + 1].1 - u_all[i][j].1;
            for k in 0..b {
                row[j * dim + k] = bvals[k] * du0;
                row[j * dim + b + k] = bvals[k] * du1;
            }
        }
    };
    // fixed-size chunks summed in index order keep the accumulation
    // independent of the thread count
    let chunk = 256usize;
    let partials: Vec<(DMatrix<f64>, DVector<f64>)> = (0..n_paths.div_ceil(chunk))
        .into_par_iter()
        .map(|ci| {
            let mut g = DMatrix::<f64>::zeros(total, total);
            let mut r = DVector::<f64>::zeros(total);
            let mut row = vec![0.0; total];
            for i in ci * chunk..((ci + 1) * chunk).min(n_paths) {
                fill_row(i, &mut row);
                let w = weights[i];
                for p in 0..total {
                    r[p] += w * row[p] * centered[i];
                    for q in p..total {
                        g[(p, q)] += w * row[p] * row[q];
                    }
                }
            }
            (g, r)
        })
        .collect();
    let mut gram = DMatrix::<f64>::zeros(total, total);
    let mut rhs = DVector::<f64>::zeros(total);
    for (g, r) in partials {
        gram += g;
        rhs += r;
    }
    for p in 0..total {
        for q in 0..p {
            gram[(p, q)] = gram[(q, p)];
        }
    }

    // a step is degenerate when its own diagonal block is rank
    // deficient; null directions of the joint system get coefficient 0
    let mut degenerate_steps = 0;
    for j in 0..n_steps {
        let block = gram.view((j * dim, j * dim), (dim, dim)).into_owned();
        let sv = block.svd(false, false);
        let smax = sv.singular_values.max();
        if smax == 0.0 || sv.rank(SVD_RTOL * smax) < dim {
            degenerate_steps += 1;
        }
    }

    let svd = gram.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = SVD_RTOL * smax.max(1e-300);
    let beta = if smax == 0.0 {
        DVector::zeros(total)
    } else {
        svd.solve(&rhs, tol).map_err(CoreError::Singular)?
    };
    let mut coeffs = Vec::with_capacity(n_steps);
    for j in 0..n_steps {
        let mut c = DMatrix::zeros(2, b);
        for k in 0..b {
            c[(0, k)] = beta[j * dim + k];
            c[(1, k)] = beta[j * dim + b + k];
        }
        coeffs.push(c);
    }

    let mut data = GKWData {
        grid: grid.clone(),
        basis: basis.clone(),
        coeffs,
        mean_term,
        degenerate_steps,
        residual_l2: 0.0,
        target_std: target_var.sqrt(),
    };

    let mut res_var = 0.0;
    for i in 0..n_paths {
        let paths = &ensemble[i];
        let mut fit = 0.0;
        for j in 0..n_steps {
            let (p0, p1) = data.psi_at(j, nodes[j], paths.x.at(j, 0), paths.y.at(j, 0));
            let du0 = u_all[i][j + 1].0 - u_all[i][j].0;
            let du1 = u_all[i][j + 1].1 - u_all[i][j].1;
            fit += p0 * du0 + p1 * du1;
        }
        let l = centered[i] - fit;
        res_var += weights[i] * l * l;
    }
    data.residual_l2 = (res_var / w_sum).sqrt();
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::hedge::simulate_ensemble;
    use crate::sde::{SVMarketSpec, SigmaRef, VolMap};
    use crate::seed::SeedSpec;

    const SIG: f64 = 0.25;

    fn problem(k: crate::sde::StateFn, payoff: crate::hedge::PayoffFn) -> HedgeProblem {
        HedgeProblem {
            market: SVMarketSpec {
                x0: 1.0,
                sigma_ref: SigmaRef::Deterministic(Arc::new(|_| SIG)),
                k,
                vol_drift: Arc::new(|_, y| -y),
                vol_noise: 0.2,
                f: VolMap::exp(),
            },
            delta: 0.0,
            r: 0.0,
            payoff,
            capital: 0.0,
        }
    }

    #[test]
    fn constant_claim_has_zero_decomposition() {
        let p = problem(Arc::new(|_, _| 0.2), Arc::new(|_: &SVPaths| 3.5));
        let grid = TimeGrid::uniform(1.0, 20).unwrap();
        let ens = simulate_ensemble(&p.market, &grid, &SeedSpec::new(201), 500, None, 0.0).unwrap();
        let gkw = gkw_decompose(&p, &ens, &Basis::default_xy()).unwrap();
        // target H/N_T is not constant (N_T varies), so only the claim
        // variance captured by the regression matters; with H constant
        // the target equals 3.5/N_T = 3.5·U⁰_T which U replicates.
        assert!(gkw.residual_l2 < 0.05 * gkw.target_std.max(1e-3), "{}", gkw.residual_l2);
    }

    #[test]
    fn linear_claim_recovers_sigma_x() {
        // k ≡ 0: U = (1, w), target X_T - EX_T = Σ σ X_j Δw_j + O(Δ);
        // the fitted ψ¹ must match σX on the bulk of the state cloud.
        let p = problem(Arc::new(|_, _| 0.0), Arc::new(|pp: &SVPaths| pp.x.terminal()));
        let grid = TimeGrid::uniform(1.0, 25).unwrap();
        let ens = simulate_ensemble(&p.market, &grid, &SeedSpec::new(202), 6000, None, 0.0).unwrap();
        let gkw = gkw_decompose(&p, &ens, &Basis::default_xy()).unwrap();
        // ΔU⁰ ≡ 0 makes every step rank-deficient by construction
        assert_eq!(gkw.degenerate_steps, grid.n_steps());
        let nodes = grid.nodes();
        let mut num = 0.0;
        let mut den = 0.0;
        for paths in ens.iter().take(500) {
            for j in 0..grid.n_steps() {
                let x = paths.x.at(j, 0);
                let (_, p1) = gkw.psi_at(j, nodes[j], x, paths.y.at(j, 0));
                num += (p1 - SIG * x).powi(2);
                den += (SIG * x).powi(2);
            }
        }
        let rel = (num / den).sqrt();
        assert!(rel < 0.15, "relative RMS {rel}");
        assert!(gkw.residual_l2 < 0.2 * gkw.target_std, "{}", gkw.residual_l2);
    }

    #[test]
    fn orthogonal_claim_goes_to_residual() {
        // H driven by w^σ only: ψ ≈ 0 and L_T carries H - EH.
        let p = problem(
            Arc::new(|_, _| 0.0),
            Arc::new(|pp: &SVPaths| pp.w_sigma.terminal()),
        );
        let grid = TimeGrid::uniform(1.0, 20).unwrap();
        let ens = simulate_ensemble(&p.market, &grid, &SeedSpec::new(203), 6000, None, 0.0).unwrap();
        let gkw = gkw_decompose(&p, &ens, &Basis::default_xy()).unwrap();
        // H ~ N(0,1): mean near 0, residual near the full std
        assert!(gkw.mean_term.abs() < 0.05, "{}", gkw.mean_term);
        assert!(gkw.residual_l2 > 0.9 * gkw.target_std, "{} {}", gkw.residual_l2, gkw.target_std);
    }

    #[test]
    fn reconstruction_identity_holds_in_l2() {
        // fresh evaluation ensemble: target - mean - ∫ψ'dU - L ≡ 0 by
        // construction, so check the fit explains most of a linear claim
        // out of sample.
        let p = problem(
            Arc::new(|_, y: f64| 0.1 + 0.05 * y.tanh()),
            Arc::new(|pp: &SVPaths| pp.x.terminal()),
        );
        let grid = TimeGrid::uniform(1.0, 25).unwrap();
        let fit = simulate_ensemble(&p.market, &grid, &SeedSpec::new(204), 6000, None, 0.0).unwrap();
        let gkw = gkw_decompose(&p, &fit, &Basis::default_xy()).unwrap();
        let eval = simulate_ensemble(&p.market, &grid, &SeedSpec::new(205), 2000, None, 0.0).unwrap();
        let nodes = grid.nodes();
        let mut res = 0.0;
        let mut tot = 0.0;
        for paths in &eval {
            let n = exponential_path(&p, paths);
            let u = u_path(paths, &n);
            let t = (p.payoff)(paths) / n.last().unwrap() - gkw.mean_term;
            let mut fitv = 0.0;
            for j in 0..grid.n_steps() {
                let (p0, p1) = gkw.psi_at(j, nodes[j], paths.x.at(j, 0), paths.y.at(j, 0));
                fitv += p0 * (u[j + 1].0 - u[j].0) + p1 * (u[j + 1].1 - u[j].1);
            }
            res += (t - fitv).powi(2);
            tot += t * t;
        }
        assert!(res < 0.1 * tot, "out-of-sample residual ratio {}", res / tot);
    }

    #[test]
    fn tiny_ensemble_rejected() {
        let p = problem(Arc::new(|_, _| 0.0), Arc::new(|pp: &SVPaths| pp.x.terminal()));
        let grid = TimeGrid::uniform(1.0, 5).unwrap();
        let ens = simulate_ensemble(&p.market, &grid, &SeedSpec::new(206), 1, None, 0.0).unwrap();
        assert!(gkw_decompose(&p, &ens, &Basis::default_xy()).is_err());
    }
}
