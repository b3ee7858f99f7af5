//! Risk functional, worst-case volatility, optimal strategy and Gateaux
//! differential in the zero-drift (k ≡ 0) case.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::grid::{trapezoid, TimeGrid};
use crate::sde::{simulate_sv_market, VolPerturbation};
use crate::seed::SeedSpec;

use super::{mc_mean, HedgeProblem, McEstimate, StateRule, StrategyRule};

/// Risk estimate with the admissibility diagnostic of the strategy.
#[derive(Debug, Clone, Copy)]
pub struct RiskReport {
    pub j: McEstimate,
    /// Sample mean of `∫|θ|²dt`.
    pub admissibility: f64,
}

/// Monte-Carlo estimate of `J(σ, θ) = E(H - x - Σ θσ ΔM⁰)²`.
///
/// The state (and the claim) always follows the nominal market; `sigma`
/// only misprices the gains, which is the misspecification the band
/// `A_δ` describes. `None` evaluates at σ⁰. Any alternative must stay
/// inside the band wherever the position is nonzero.
pub fn risk_j(
    problem: &HedgeProblem,
    sigma: Option<&StateRule>,
    theta: &StrategyRule,
    grid: &TimeGrid,
    seed: &SeedSpec,
    n_paths: usize,
) -> Result<RiskReport> {
    problem.validate()?;
    if n_paths < 2 {
        return Err(CoreError::InvalidArgument("n_paths must be >= 2".into()));
    }
    let band = problem.band_half_width();

    let samples: Vec<Result<(f64, f64)>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let paths = simulate_sv_market(&problem.market, grid, seed, k, None, 0.0)?;
            let pos = theta.positions(&paths)?;
            let nodes = grid.nodes();
            let mut gains = 0.0;
            let mut adm = 0.0;
            for j in 0..grid.n_steps() {
                let (t, y) = (nodes[j], paths.y.at(j, 0));
                let s0 = problem.sigma0(t, y);
                let s = match sigma {
                    Some(rule) => {
                        let v = rule(t, paths.x.at(j, 0), y);
                        if pos[j] != 0.0 && (v - s0).abs() > band * (1.0 + 1e-12) + 1e-14 {
                            return Err(CoreError::PerturbationBound {
                                s: t,
                                value: (v - s0).abs(),
                                bound: band,
                            });
                        }
                        v
                    }
                    None => s0,
                };
                let dm0 = paths.m0.at(j + 1, 0) - paths.m0.at(j, 0);
                gains += pos[j] * s * dm0;
                adm += pos[j] * pos[j] * grid.dt(j);
            }
            let h = (problem.payoff)(&paths);
            if !h.is_finite() {
                return Err(CoreError::InvalidPath("non-finite payoff sample".into()));
            }
            let loss = h - problem.capital - gains;
            Ok((loss * loss, adm))
        })
        .collect();

    let mut sq = Vec::with_capacity(n_paths);
    let mut adm_sum = 0.0;
    for s in samples {
        let (l2, adm) = s?;
        sq.push(l2);
        adm_sum += adm;
    }
    Ok(RiskReport { j: mc_mean(&sq), admissibility: adm_sum / n_paths as f64 })
}

fn require_zero_drift(problem: &HedgeProblem, t_end: f64) -> Result<()> {
    if !problem.k_is_zero(t_end) {
        return Err(CoreError::Unsupported(
            "this operation is defined for the zero-drift case k ≡ 0".into(),
        ));
    }
    Ok(())
}

/// Worst-case volatility `σ*(θ)`: the band edge selected against
/// the hedge, zero (by the 0/0 convention) where the position vanishes.
pub fn worst_case_sigma(
    problem: &HedgeProblem,
    theta: StateRule,
    phi: StateRule,
) -> Result<StateRule> {
    require_zero_drift(problem, 1.0)?;
    let band = problem.band_half_width();
    let p = problem.clone();
    Ok(Arc::new(move |t, x, y| {
        let th = theta(t, x, y);
        if th == 0.0 {
            return 0.0;
        }
        let s0 = p.sigma0(t, y);
        if phi(t, x, y) / th >= s0 {
            s0 - band
        } else {
            s0 + band
        }
    }))
}

/// The zero-drift optimal strategy `θ*_t = φ^H_t / σ⁰_t` (0/0 := 0).
///
/// In this case θ* solves the exact robust problem and its first-order
/// approximation simultaneously.
pub fn strategy_zero_drift(problem: &HedgeProblem, phi: StateRule) -> Result<StrategyRule> {
    require_zero_drift(problem, 1.0)?;
    let p = problem.clone();
    Ok(StrategyRule::feedback(Arc::new(move |t, x, y| {
        let s0 = p.sigma0(t, y);
        if s0 == 0.0 {
            0.0
        } else {
            phi(t, x, y) / s0
        }
    })))
}

/// Zero-drift Gateaux differential
/// `DJ(σ⁰, h; θ) = 2E ∫ (θσ⁰ - φ^H) θ h dt` by Monte Carlo.
pub fn gateaux_dj(
    problem: &HedgeProblem,
    theta: &StrategyRule,
    h: &VolPerturbation,
    phi: &StateRule,
    grid: &TimeGrid,
    seed: &SeedSpec,
    n_paths: usize,
) -> Result<McEstimate> {
    require_zero_drift(problem, grid.t_end())?;
    let samples: Vec<Result<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let paths = simulate_sv_market(&problem.market, grid, seed, k, None, 0.0)?;
            let pos = theta.positions(&paths)?;
            let nodes = grid.nodes();
            let integrand: Vec<f64> = (0..grid.n_nodes())
                .map(|j| {
                    let (t, x, y) = (nodes[j], paths.x.at(j, 0), paths.y.at(j, 0));
                    let hv = (h.h)(t, y);
                    (pos[j] * problem.sigma0(t, y) - phi(t, x, y)) * pos[j] * hv
                })
                .collect();
            Ok(2.0 * trapezoid(nodes, &integrand))
        })
        .collect();
    let vals = samples.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(mc_mean(&vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hedge::bs;
    use crate::sde::{SVMarketSpec, SigmaRef, VolMap};

    const SIG: f64 = 0.3;
    const STRIKE: f64 = 1.0;

    fn market() -> SVMarketSpec {
        SVMarketSpec {
            x0: 1.0,
            sigma_ref: SigmaRef::Deterministic(Arc::new(|_| SIG)),
            k: Arc::new(|_, _| 0.0),
            vol_drift: Arc::new(|_, _| 0.0),
            vol_noise: 0.0,
            f: VolMap::exp(),
        }
    }

    fn call_problem(capital: f64, delta: f64, r: f64) -> HedgeProblem {
        HedgeProblem {
            market: market(),
            delta,
            r,
            payoff: Arc::new(|p: &crate::sde::SVPaths| (p.x.terminal() - STRIKE).max(0.0)),
            capital,
        }
    }

    /// Martingale-representation integrand of the call: φ = σ⁰ x Δ(t,x).
    fn call_phi(t_end: f64) -> StateRule {
        Arc::new(move |t, x, _| SIG * x * bs::call_delta(x, STRIKE, SIG * SIG * (t_end - t)))
    }

    fn call_theta(t_end: f64) -> StateRule {
        Arc::new(move |t, x, _| x * bs::call_delta(x, STRIKE, SIG * SIG * (t_end - t)))
    }

    #[test]
    fn linear_claim_replication_error_shrinks() {
        // H = X_T, θ = X, x = EH = x0: J is pure discretization error.
        let mut problem = call_problem(1.0, 0.0, 0.0);
        problem.payoff = Arc::new(|p: &crate::sde::SVPaths| p.x.terminal());
        let theta = StrategyRule::feedback(Arc::new(|_, x, _| x));
        let seed = SeedSpec::new(101);
        let coarse = TimeGrid::uniform(1.0, 50).unwrap();
        let fine = TimeGrid::uniform(1.0, 400).unwrap();
        let jc = risk_j(&problem, None, &theta, &coarse, &seed, 500).unwrap();
        let jf = risk_j(&problem, None, &theta, &fine, &seed, 500).unwrap();
        assert!(jc.j.value < 5e-3, "{}", jc.j.value);
        // O(Δs) decay: an 8x refinement cuts J by well over 2x
        assert!(jf.j.value < jc.j.value / 2.0, "{} {}", jf.j.value, jc.j.value);
        assert!(jf.admissibility.is_finite() && jf.admissibility > 0.0);
    }

    #[test]
    fn capital_shift_adds_its_square() {
        let grid = TimeGrid::uniform(1.0, 100).unwrap();
        let seed = SeedSpec::new(102);
        let eh = bs::call_price(1.0, STRIKE, SIG * SIG);
        let theta = StrategyRule::feedback(call_theta(1.0));
        let dx = 0.2;
        let j0 = risk_j(&call_problem(eh, 0.0, 0.0), None, &theta, &grid, &seed, 2000)
            .unwrap()
            .j;
        let j1 = risk_j(&call_problem(eh - dx, 0.0, 0.0), None, &theta, &grid, &seed, 2000)
            .unwrap()
            .j;
        // common random numbers: J₁ - J₀ = Δx² + 2Δx·mean(loss₀)
        let diff = j1.value - j0.value;
        let tol = 3.0 * 2.0 * dx * (j0.value / 2000.0f64).sqrt().max(1e-4) + 0.01 * dx * dx;
        assert!((diff - dx * dx).abs() < tol, "diff {diff}");
    }

    #[test]
    fn zero_strategy_risk_is_second_moment() {
        let grid = TimeGrid::uniform(1.0, 50).unwrap();
        let seed = SeedSpec::new(103);
        let problem = call_problem(0.0, 0.0, 0.0);
        let rep = risk_j(&problem, None, &StrategyRule::zero(), &grid, &seed, 500).unwrap();
        // loss ≡ H pathwise, so J equals the sample mean of H² exactly
        let mut hh = Vec::new();
        for k in 0..500u64 {
            let p = simulate_sv_market(&problem.market, &grid, &seed, k, None, 0.0).unwrap();
            let h = (p.x.terminal() - STRIKE).max(0.0);
            hh.push(h * h);
        }
        let mean = hh.iter().sum::<f64>() / 500.0;
        assert!((rep.j.value - mean).abs() < 1e-12);
        assert_eq!(rep.admissibility, 0.0);
    }

    #[test]
    fn band_violation_rejected() {
        let grid = TimeGrid::uniform(1.0, 20).unwrap();
        let seed = SeedSpec::new(104);
        let problem = call_problem(0.0, 0.05, 1.0);
        let theta = StrategyRule::feedback(Arc::new(|_, x, _| x));
        let sigma: StateRule = Arc::new(|_, _, _| SIG + 0.2);
        let r = risk_j(&problem, Some(&sigma), &theta, &grid, &seed, 10);
        assert!(matches!(r, Err(CoreError::PerturbationBound { .. })));
    }

    #[test]
    fn worst_case_branches() {
        let problem = call_problem(0.0, 0.05, 1.0);
        let phi = call_phi(1.0);
        // θ = φ/(2σ⁰): ratio 2σ⁰ >= σ⁰ → lower edge
        let phi2 = call_phi(1.0);
        let low = worst_case_sigma(
            &problem,
            Arc::new(move |t, x, y| phi2(t, x, y) / (2.0 * SIG)),
            phi.clone(),
        )
        .unwrap();
        assert!((low(0.3, 1.1, 0.0) - (SIG - 0.05)).abs() < 1e-14);
        // θ = 2φ/σ⁰: ratio σ⁰/2 < σ⁰ → upper edge
        let phi3 = call_phi(1.0);
        let high = worst_case_sigma(
            &problem,
            Arc::new(move |t, x, y| 2.0 * phi3(t, x, y) / SIG),
            phi.clone(),
        )
        .unwrap();
        assert!((high(0.3, 1.1, 0.0) - (SIG + 0.05)).abs() < 1e-14);
        // θ ≡ 0 → σ* ≡ 0
        let zero = worst_case_sigma(&problem, Arc::new(|_, _, _| 0.0), phi).unwrap();
        assert_eq!(zero(0.5, 1.0, 0.0), 0.0);
    }

    #[test]
    fn worst_case_dominates_band_grid() {
        // fixed suboptimal θ: J at σ*(θ) beats every constant σ in the band.
        let grid = TimeGrid::uniform(1.0, 50).unwrap();
        let seed = SeedSpec::new(105);
        let eh = bs::call_price(1.0, STRIKE, SIG * SIG);
        let problem = call_problem(eh, 0.05, 1.0);
        let th = call_theta(1.0);
        let theta_fn: StateRule = {
            let th = th.clone();
            Arc::new(move |t, x, y| 0.6 * th(t, x, y))
        };
        let theta = StrategyRule::feedback(theta_fn.clone());
        let sstar = worst_case_sigma(&problem, theta_fn, call_phi(1.0)).unwrap();
        let jstar = risk_j(&problem, Some(&sstar), &theta, &grid, &seed, 2000).unwrap().j;
        for i in 0..9 {
            let shift = -0.05 + 0.0125 * i as f64;
            let sig: StateRule = Arc::new(move |_, _, _| SIG + shift);
            let j = risk_j(&problem, Some(&sig), &theta, &grid, &seed, 2000).unwrap().j;
            let se = (jstar.std_err.powi(2) + j.std_err.powi(2)).sqrt();
            assert!(jstar.value >= j.value - 3.0 * se, "shift {shift}: {} < {}", jstar.value, j.value);
        }
    }

    #[test]
    fn dj_vanishes_at_optimum_and_matches_fd() {
        let grid = TimeGrid::uniform(1.0, 50).unwrap();
        let seed = SeedSpec::new(106);
        let eh = bs::call_price(1.0, STRIKE, SIG * SIG);
        let problem = call_problem(eh, 0.05, 1.0);
        let phi = call_phi(1.0);

        // h ≡ 0 → exactly 0
        let theta_sub = StrategyRule::feedback({
            let t = call_theta(1.0);
            Arc::new(move |a, b, c| 0.5 * t(a, b, c))
        });
        let h0 = VolPerturbation::constant(0.0, 1.0);
        let dj0 = gateaux_dj(&problem, &theta_sub, &h0, &phi, &grid, &seed, 200).unwrap();
        assert_eq!(dj0.value, 0.0);

        // θ = θ*: integrand (θσ⁰ - φ)θh ≡ 0 pathwise
        let opt = strategy_zero_drift(&problem, phi.clone()).unwrap();
        for hv in [0.8, -0.5, 0.3] {
            let h = VolPerturbation::constant(hv, 1.0);
            let dj = gateaux_dj(&problem, &opt, &h, &phi, &grid, &seed, 200).unwrap();
            assert!(dj.value.abs() < 1e-12, "{}", dj.value);
        }

        // non-optimal θ: forward-difference oracle with common random numbers
        let h = VolPerturbation::constant(1.0, 1.0);
        let dj = gateaux_dj(&problem, &theta_sub, &h, &phi, &grid, &seed, 4000).unwrap();
        let d = 1e-3;
        let sig_h: StateRule = Arc::new(move |_, _, _| SIG + d);
        let j1 = risk_j(&problem, Some(&sig_h), &theta_sub, &grid, &seed, 4000).unwrap().j;
        let j0 = risk_j(&problem, None, &theta_sub, &grid, &seed, 4000).unwrap().j;
        let fd = (j1.value - j0.value) / d;
        let tol = 0.05 * dj.value.abs() + 3.0 * dj.std_err + 0.05;
        assert!((dj.value - fd).abs() < tol, "dj {} fd {fd}", dj.value);
    }

    #[test]
    fn nonzero_k_rejected() {
        let mut problem = call_problem(0.0, 0.0, 0.0);
        problem.market.k = Arc::new(|_, _| 0.2);
        assert!(strategy_zero_drift(&problem, call_phi(1.0)).is_err());
        assert!(worst_case_sigma(&problem, Arc::new(|_, _, _| 1.0), call_phi(1.0)).is_err());
    }
}
