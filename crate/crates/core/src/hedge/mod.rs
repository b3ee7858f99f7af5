//! Mean-variance hedging under volatility misspecification: risk
//! functional, worst-case volatility, Gateaux differential, GKW
//! decomposition, robust strategies and the pricing PDE.

pub mod bs;
mod density;
mod gkw;
mod pde;
mod strategy;
mod zero_drift;

pub use density::{density_normalizer_mc, zeta_and_ztilde, DensityPaths};
pub use gkw::{gkw_decompose, Basis, GKWData};
pub use pde::{sv_pde_price, PdeLattice, PdeSurface};
pub use strategy::{gateaux_dj_general, strategy_general, strategy_general_path, value_process};
pub use zero_drift::{gateaux_dj, risk_j, strategy_zero_drift, worst_case_sigma};

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::grid::TimeGrid;
use crate::sde::{simulate_sv_market, SVMarketSpec, SVPaths, SigmaRef, VolPerturbation};
use crate::seed::SeedSpec;

/// Feedback on the market state: `(t, x, y) → value`.
pub type StateRule = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Claim payoff as a functional of the simulated market paths.
pub type PayoffFn = Arc<dyn Fn(&SVPaths) -> f64 + Send + Sync>;

/// Hedging problem: nominal market, misspecification band `σ⁰ ± δ·r`,
/// claim and initial capital.
#[derive(Clone)]
pub struct HedgeProblem {
    pub market: SVMarketSpec,
    pub delta: f64,
    pub r: f64,
    pub payoff: PayoffFn,
    pub capital: f64,
}

impl HedgeProblem {
    pub fn band_half_width(&self) -> f64 {
        self.delta * self.r
    }

    /// Nominal volatility at a state point.
    pub fn sigma0(&self, t: f64, y: f64) -> f64 {
        match &self.market.sigma_ref {
            SigmaRef::FromVol => (self.market.f.forward)(y).sqrt(),
            SigmaRef::Deterministic(s0) => s0(t),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) || !(self.r >= 0.0) {
            return Err(CoreError::InvalidArgument("delta and r must be >= 0".into()));
        }
        Ok(())
    }

    /// Whether the market price of risk vanishes on probe points.
    pub(crate) fn k_is_zero(&self, t_end: f64) -> bool {
        let probes_t = [0.0, 0.25 * t_end, 0.5 * t_end, 0.75 * t_end, t_end];
        let probes_y = [-1.0, -0.3, 0.0, 0.3, 1.0];
        probes_t
            .iter()
            .all(|&t| probes_y.iter().all(|&y| (self.market.k)(t, y) == 0.0))
    }
}

/// Trading strategy: either a state-feedback rule or a path functional
/// producing the dollar position at every grid node.
#[derive(Clone)]
pub enum Strategy {
    Feedback(StateRule),
    Pathwise(Arc<dyn Fn(&SVPaths) -> Result<Vec<f64>> + Send + Sync>),
}

/// Strategy together with its admissibility diagnostic `E∫|θ|²dt`,
/// filled in by the risk evaluator.
#[derive(Clone)]
pub struct StrategyRule {
    pub theta: Strategy,
}

impl StrategyRule {
    pub fn feedback(f: StateRule) -> Self {
        Self { theta: Strategy::Feedback(f) }
    }

    pub fn pathwise(f: Arc<dyn Fn(&SVPaths) -> Result<Vec<f64>> + Send + Sync>) -> Self {
        Self { theta: Strategy::Pathwise(f) }
    }

    pub fn zero() -> Self {
        Self::feedback(Arc::new(|_, _, _| 0.0))
    }

    /// Position at every node of a simulated path (terminal node unused).
    pub fn positions(&self, paths: &SVPaths) -> Result<Vec<f64>> {
        match &self.theta {
            Strategy::Feedback(f) => {
                let nodes = paths.x.grid().nodes();
                Ok((0..nodes.len())
                    .map(|j| f(nodes[j], paths.x.at(j, 0), paths.y.at(j, 0)))
                    .collect())
            }
            Strategy::Pathwise(f) => {
                let v = f(paths)?;
                if v.len() != paths.x.grid().n_nodes() {
                    return Err(CoreError::InvalidPath(
                        "pathwise strategy must return one value per node".into(),
                    ));
                }
                Ok(v)
            }
        }
    }
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub value: f64,
    pub std_err: f64,
}

pub(crate) fn mc_mean(samples: &[f64]) -> McEstimate {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    McEstimate { value: mean, std_err: (var / n).sqrt() }
}

/// Simulate `n` market replicates in parallel with order-stable output.
pub fn simulate_ensemble(
    spec: &SVMarketSpec,
    grid: &TimeGrid,
    seed: &SeedSpec,
    n: usize,
    h: Option<&VolPerturbation>,
    delta: f64,
) -> Result<Vec<SVPaths>> {
    let results: Vec<Result<SVPaths>> = (0..n as u64)
        .into_par_iter()
        .map(|k| simulate_sv_market(spec, grid, seed, k, h, delta))
        .collect();
    results.into_iter().collect()
}
