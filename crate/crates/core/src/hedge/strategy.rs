//! The general optimal mean-variance robust strategy and
//! the Gateaux differential of the risk in its decomposed form.

use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::sde::{SVPaths, VolPerturbation};

use super::density::exponential_path;
use super::gkw::{u_path, GKWData};
use super::{mc_mean, HedgeProblem, McEstimate, StrategyRule};

/// Wealth process `V*_t = (z̃₀/z̃_t)(x + Σ_{l<j} ψ'ΔU)` along one path,
/// one value per node.
pub fn value_process(
    problem: &HedgeProblem,
    gkw: &GKWData,
    paths: &SVPaths,
) -> Result<Vec<f64>> {
    let grid = paths.x.grid();
    if grid != &gkw.grid {
        return Err(CoreError::InvalidGrid("path grid differs from the fitted grid".into()));
    }
    let n = exponential_path(problem, paths);
    let u = u_path(paths, &n);
    let nodes = grid.nodes();
    let mut out = Vec::with_capacity(nodes.len());
    let mut acc = problem.capital;
    out.push(acc);
    for j in 0..grid.n_steps() {
        let (p0, p1) = gkw.psi_at(j, nodes[j], paths.x.at(j, 0), paths.y.at(j, 0));
        acc += p0 * (u[j + 1].0 - u[j].0) + p1 * (u[j + 1].1 - u[j].1);
        out.push(acc / n[j + 1]);
    }
    Ok(out)
}

/// Positions of the general robust strategy
/// `θ*_t = (σ⁰_t)⁻¹[ψ¹_t + ζ_t(V*_t - ψ_t'U_t)]` along one path,
/// evaluated in undeflated units.
///
/// Deflating by `z̃₀/z̃_t` turns every density factor into `N_t` and the
/// bracket into `ψ¹_t - k_t(W_t - ψ⁰_t - ψ¹_t M⁰_t)`, where `W` is the
/// self-financing wealth `W_0 = x`, `dW = θσ⁰dM⁰`. Both components of
/// `U` are driven by `M⁰` alone, so the regression identifies `ψ` only
/// up to the null direction of `d⟨U⟩`; this form is algebraically
/// invariant under that freedom.
pub fn strategy_general_path(
    problem: &HedgeProblem,
    gkw: &GKWData,
    paths: &SVPaths,
) -> Result<Vec<f64>> {
    let grid = paths.x.grid();
    if grid != &gkw.grid {
        return Err(CoreError::InvalidGrid("path grid differs from the fitted grid".into()));
    }
    let nodes = grid.nodes();

    let mut out = Vec::with_capacity(nodes.len());
    let mut wealth = problem.capital;
    for j in 0..grid.n_steps() {
        let (t, x, y) = (nodes[j], paths.x.at(j, 0), paths.y.at(j, 0));
        let s0 = problem.sigma0(t, y);
        if s0.abs() < 1e-14 {
            return Err(CoreError::Singular("σ⁰ at a grid node"));
        }
        let (p0, p1) = gkw.psi_at(j, t, x, y);
        let k = (problem.market.k)(t, y);
        let m0 = paths.m0.at(j, 0);
        let theta = (p1 - k * (wealth - p0 - p1 * m0)) / s0;
        out.push(theta);
        wealth += theta * s0 * (paths.m0.at(j + 1, 0) - m0);
    }
    out.push(0.0);
    Ok(out)
}

/// General robust strategy as a pathwise rule.
pub fn strategy_general(problem: &HedgeProblem, gkw: GKWData) -> StrategyRule {
    let p = problem.clone();
    StrategyRule::pathwise(Arc::new(move |paths: &SVPaths| {
        strategy_general_path(&p, &gkw, paths)
    }))
}

/// Gateaux differential of the risk in decomposed form:
/// `DJ̄ = 2 z̃₀⁻¹ E^Q̃ Σ_j (ψ_j(σ⁰) - ψ^H_j)' ΔU_j ΔU_j' ψ_j(h)`,
/// with `ψ¹(σ) = σθ`, `ψ⁰(σ)_t = ∫θσ dM⁰ - θ_tσ_t M⁰_t`.
pub fn gateaux_dj_general(
    problem: &HedgeProblem,
    theta: &StrategyRule,
    h: &VolPerturbation,
    gkw: &GKWData,
    ensemble: &[SVPaths],
) -> Result<McEstimate> {
    if ensemble.len() < 2 {
        return Err(CoreError::InvalidArgument("need at least 2 paths".into()));
    }
    let grid = &gkw.grid;
    let nodes = grid.nodes();

    let mut weighted = Vec::with_capacity(ensemble.len());
    let mut weights = Vec::with_capacity(ensemble.len());
    for paths in ensemble {
        if paths.x.grid() != grid {
            return Err(CoreError::InvalidGrid("ensemble grid differs from the fitted grid".into()));
        }
        let pos = theta.positions(paths)?;
        let n = exponential_path(problem, paths);
        let u = u_path(paths, &n);
        let mut int_s = 0.0;
        let mut int_h = 0.0;
        let mut total = 0.0;
        for j in 0..grid.n_steps() {
            let (t, x, y) = (nodes[j], paths.x.at(j, 0), paths.y.at(j, 0));
            let s0 = problem.sigma0(t, y);
            let hv = (h.h)(t, y);
            let m0 = paths.m0.at(j, 0);
            let psi_s = (int_s - pos[j] * s0 * m0, s0 * pos[j]);
            let psi_h = (int_h - pos[j] * hv * m0, hv * pos[j]);
            let (gp0, gp1) = gkw.psi_at(j, t, x, y);
            let d0 = psi_s.0 - gp0;
            let d1 = psi_s.1 - gp1;
            let du0 = u[j + 1].0 - u[j].0;
            let du1 = u[j + 1].1 - u[j].1;
            // (d' ΔU)(ΔU' ψ(h))
            total += (d0 * du0 + d1 * du1) * (du0 * psi_h.0 + du1 * psi_h.1);
            let dm0 = paths.m0.at(j + 1, 0) - m0;
            int_s += pos[j] * s0 * dm0;
            int_h += pos[j] * hv * dm0;
        }
        let nt = *n.last().unwrap();
        weights.push(nt * nt);
        weighted.push(total);
    }
    // 2 z̃₀⁻¹ E^Q̃[·] with dQ̃ = (z̃_T²/z̃₀)dP and z̃_T = N_T z̃₀
    // collapses to 2 E[N_T² ·]; the z̃₀ factors cancel exactly.
    let samples: Vec<f64> = weighted
        .iter()
        .zip(&weights)
        .map(|(v, w)| 2.0 * w * v)
        .collect();
    Ok(mc_mean(&samples))
}
