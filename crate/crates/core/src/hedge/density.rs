//! Variance-optimal martingale density in the orthogonal case:
//! `z̃_T = 𝓔_T(-k·M⁰)/E𝓔_T(-k·M⁰)` with integrand `ζ_t = -k_t 𝓔_t(-k·M⁰) z̃₀`.
//!
//! The orthogonality hypothesis `⟨m, M⟩ = 0` holds by construction
//! here: `k = k(t, Y)` and `Y` is driven by `w^σ`, independent of the
//! return driver `w^R`.

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::grid::{SamplePath, TimeGrid};
use crate::sde::{simulate_sv_market, SVPaths};
use crate::seed::SeedSpec;

use super::{mc_mean, HedgeProblem, McEstimate};

/// Density process `z̃`, its integrand `ζ` and the unnormalized
/// exponential `N_t = 𝓔_t(-k·M⁰)`.
#[derive(Debug, Clone)]
pub struct DensityPaths {
    pub ztilde: SamplePath,
    pub zeta: SamplePath,
    pub n: SamplePath,
    /// `z̃₀ = 1/E N_T`.
    pub z0: f64,
}

/// `N_t = 𝓔_t(-k·M⁰)` along one simulated market path.
pub(crate) fn exponential_path(problem: &HedgeProblem, paths: &SVPaths) -> Vec<f64> {
    let grid = paths.m0.grid();
    let nodes = grid.nodes();
    let mut out = Vec::with_capacity(nodes.len());
    out.push(1.0);
    let mut m = 0.0;
    let mut qv = 0.0;
    for j in 0..grid.n_steps() {
        let kj = (problem.market.k)(nodes[j], paths.y.at(j, 0));
        m -= kj * (paths.m0.at(j + 1, 0) - paths.m0.at(j, 0));
        qv += kj * kj * grid.dt(j);
        out.push((m - 0.5 * qv).exp());
    }
    out
}

/// Normalized density path and the integrand of its martingale
/// representation, given the normalizer `E N_T`.
pub fn zeta_and_ztilde(
    problem: &HedgeProblem,
    paths: &SVPaths,
    normalizer: f64,
) -> Result<DensityPaths> {
    if !(normalizer > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "density normalizer must be > 0, got {normalizer}"
        )));
    }
    let n = exponential_path(problem, paths);
    let grid = paths.m0.grid().clone();
    let nodes = grid.nodes();
    let ztilde: Vec<f64> = n.iter().map(|v| v / normalizer).collect();
    let zeta: Vec<f64> = n
        .iter()
        .enumerate()
        .map(|(j, v)| -(problem.market.k)(nodes[j], paths.y.at(j, 0)) * v / normalizer)
        .collect();
    Ok(DensityPaths {
        ztilde: SamplePath::scalar(grid.clone(), ztilde)?,
        zeta: SamplePath::scalar(grid.clone(), zeta)?,
        n: SamplePath::scalar(grid, n)?,
        z0: 1.0 / normalizer,
    })
}

/// Monte-Carlo estimate of the normalizer `E N_T = E𝓔_T(-k·M⁰)`.
///
/// Use a seed disjoint from the evaluation ensemble so the
/// normalization check stays independent.
pub fn density_normalizer_mc(
    problem: &HedgeProblem,
    grid: &TimeGrid,
    seed: &SeedSpec,
    n_paths: usize,
) -> Result<McEstimate> {
    if n_paths < 2 {
        return Err(CoreError::InvalidArgument("n_paths must be >= 2".into()));
    }
    let terminals: Vec<Result<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let paths = simulate_sv_market(&problem.market, grid, seed, k, None, 0.0)?;
            Ok(*exponential_path(problem, &paths).last().unwrap())
        })
        .collect();
    let vals = terminals.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(mc_mean(&vals))
}
