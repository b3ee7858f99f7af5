//! Simulation of the nominal small-noise diffusion, its contaminated
//! alternatives, the limit ODE and Doléans exponentials.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};
use crate::grid::{SamplePath, TimeGrid};
use crate::model::{ParamDriftModel, PathPrefix};
use crate::seed::SeedSpec;

const BLOWUP_LIMIT: f64 = 1e12;

pub type PerturbFn = Arc<dyn Fn(&PathPrefix, &[f64]) -> f64 + Send + Sync>;

/// Bounded drift perturbation `h(s, x; α)` with its class bound `r`.
#[derive(Clone)]
pub struct ContaminationSpec {
    h: PerturbFn,
    pub bound: f64,
}

impl ContaminationSpec {
    pub fn new(h: PerturbFn, bound: f64) -> Result<Self> {
        if !(bound >= 0.0) {
            return Err(CoreError::InvalidArgument("bound must be >= 0".into()));
        }
        Ok(Self { h, bound })
    }

    pub fn constant(eta: f64, bound: f64) -> Result<Self> {
        Self::new(Arc::new(move |_: &PathPrefix, _: &[f64]| eta), bound)
    }

    /// Evaluate, rejecting values outside the declared bound.
    pub fn eval(&self, p: &PathPrefix, alpha: &[f64]) -> Result<f64> {
        let v = (self.h)(p, alpha);
        if v.abs() > self.bound * (1.0 + 1e-12) + 1e-300 {
            return Err(CoreError::PerturbationBound { s: p.s, value: v.abs(), bound: self.bound });
        }
        Ok(v)
    }
}

/// Classical RK4 solution of the limit ODE `dY = a(s, Y; α) ds`, `Y₀ = 0`.
pub fn solve_limit_ode(
    model: &ParamDriftModel,
    alpha: &[f64],
    grid: &TimeGrid,
) -> Result<SamplePath> {
    let nodes = grid.nodes();
    let mut times = Vec::with_capacity(nodes.len());
    let mut values = Vec::with_capacity(nodes.len());
    times.push(0.0);
    values.push(0.0f64);
    let mut y = 0.0;
    for j in 0..grid.n_steps() {
        let (s, dt) = (nodes[j], grid.dt(j));
        let eval = |s: f64, y: f64, times: &[f64], values: &[f64]| {
            model.drift(&PathPrefix { times, values, s, y }, alpha)
        };
        let k1 = eval(s, y, &times, &values);
        let k2 = eval(s + 0.5 * dt, y + 0.5 * dt * k1, &times, &values);
        let k3 = eval(s + 0.5 * dt, y + 0.5 * dt * k2, &times, &values);
        let k4 = eval(s + dt, y + dt * k3, &times, &values);
        y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !y.is_finite() || y.abs() > BLOWUP_LIMIT {
            return Err(CoreError::OdeBlowUp { time: nodes[j + 1], value: y });
        }
        times.push(nodes[j + 1]);
        values.push(y);
    }
    SamplePath::scalar(grid.clone(), values)
}

/// Euler solution of the limit ODE (the ε = 0 member of the Euler family).
pub fn solve_limit_ode_euler(
    model: &ParamDriftModel,
    alpha: &[f64],
    grid: &TimeGrid,
) -> Result<SamplePath> {
    euler_path(model, alpha, None, grid, None)
}

fn euler_path(
    model: &ParamDriftModel,
    alpha: &[f64],
    h: Option<&ContaminationSpec>,
    grid: &TimeGrid,
    noise: Option<&[f64]>,
) -> Result<SamplePath> {
    let nodes = grid.nodes();
    let mut times = Vec::with_capacity(nodes.len());
    let mut values = Vec::with_capacity(nodes.len());
    times.push(0.0);
    values.push(0.0f64);
    let mut y = 0.0;
    for j in 0..grid.n_steps() {
        let dt = grid.dt(j);
        let p = PathPrefix {
            times: &times[..j],
            values: &values[..j],
            s: nodes[j],
            y,
        };
        let mut drift = model.drift(&p, alpha);
        if let Some(h) = h {
            drift += model.epsilon * h.eval(&p, alpha)?;
        }
        y += drift * dt;
        if let Some(dw) = noise {
            y += model.epsilon * dw[j];
        }
        if !y.is_finite() || y.abs() > BLOWUP_LIMIT {
            return Err(CoreError::OdeBlowUp { time: nodes[j + 1], value: y });
        }
        times.push(nodes[j + 1]);
        values.push(y);
    }
    SamplePath::scalar(grid.clone(), values)
}

/// Wiener increments over the grid steps from stream (replicate, component).
pub fn wiener_increments(
    grid: &TimeGrid,
    seed: &SeedSpec,
    replicate: u64,
    component: u64,
) -> Vec<f64> {
    let mut rng = seed.stream(replicate, component);
    (0..grid.n_steps())
        .map(|j| {
            let z: f64 = rng.sample(StandardNormal);
            z * grid.dt(j).sqrt()
        })
        .collect()
}

/// Euler-Maruyama path of `dY = a(s, Y; α) ds + ε dw`.
pub fn simulate_small_noise(
    model: &ParamDriftModel,
    alpha: &[f64],
    grid: &TimeGrid,
    seed: &SeedSpec,
    replicate: u64,
) -> Result<SamplePath> {
    let dw = wiener_increments(grid, seed, replicate, 0);
    euler_path(model, alpha, None, grid, Some(&dw))
}

/// Contaminated path: in scaled coordinates the drift is `a + ε h`.
///
/// With `h ≡ 0` and the same seed this is bit-identical to
/// [`simulate_small_noise`].
pub fn simulate_contaminated(
    model: &ParamDriftModel,
    alpha: &[f64],
    h: &ContaminationSpec,
    grid: &TimeGrid,
    seed: &SeedSpec,
    replicate: u64,
) -> Result<SamplePath> {
    let dw = wiener_increments(grid, seed, replicate, 0);
    euler_path(model, alpha, Some(h), grid, Some(&dw))
}

/// Pathwise Doléans exponential `𝓔_t(M) = exp(M_t - ½⟨M⟩_t)`.
pub fn dolean_exp(m: &SamplePath, qv: &SamplePath) -> Result<SamplePath> {
    if m.grid() != qv.grid() {
        return Err(CoreError::InvalidPath("M and ⟨M⟩ must share a grid".into()));
    }
    if m.at(0, 0) != 0.0 {
        return Err(CoreError::InvalidPath("M must start at 0".into()));
    }
    if qv.at(0, 0) != 0.0 {
        return Err(CoreError::DecreasingBracket(0));
    }
    let qvv = qv.scalar_values();
    for j in 1..qvv.len() {
        if qvv[j] < qvv[j - 1] {
            return Err(CoreError::DecreasingBracket(j));
        }
    }
    let values = m
        .scalar_values()
        .iter()
        .zip(qvv)
        .map(|(&mj, &qj)| (mj - 0.5 * qj).exp())
        .collect();
    SamplePath::scalar(m.grid().clone(), values)
}

/// Realized bracket: cumulative sum of products of increments.
pub fn realized_cross_bracket(a: &SamplePath, b: &SamplePath) -> Result<SamplePath> {
    if a.grid() != b.grid() {
        return Err(CoreError::InvalidPath("paths must share a grid".into()));
    }
    let (av, bv) = (a.scalar_values(), b.scalar_values());
    let mut out = Vec::with_capacity(av.len());
    out.push(0.0);
    let mut acc = 0.0;
    for j in 1..av.len() {
        acc += (av[j] - av[j - 1]) * (bv[j] - bv[j - 1]);
        out.push(acc);
    }
    SamplePath::scalar(a.grid().clone(), out)
}

/// Realized quadratic bracket of a scalar path.
pub fn realized_bracket(a: &SamplePath) -> Result<SamplePath> {
    realized_cross_bracket(a, a)
}

// ---------------------------------------------------------------------------
// Stochastic-volatility market
// ---------------------------------------------------------------------------

pub type StateFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// One-to-one positive map with `σ² = f(Y)`.
#[derive(Clone)]
pub struct VolMap {
    pub forward: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub inverse: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl VolMap {
    /// `f = exp`, `f⁻¹ = ln`.
    pub fn exp() -> Self {
        Self {
            forward: Arc::new(f64::exp),
            inverse: Arc::new(f64::ln),
        }
    }
}

/// Reference volatility of the market.
#[derive(Clone)]
pub enum SigmaRef {
    /// `σ_t = f(Y_t)^{1/2}` (the latent-volatility instantiation).
    FromVol,
    /// Deterministic reference `σ⁰(t)`.
    Deterministic(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// Market of the coupled price/volatility system.
#[derive(Clone)]
pub struct SVMarketSpec {
    pub x0: f64,
    pub sigma_ref: SigmaRef,
    /// Market price of risk `k_t = k(t, Y_t)`.
    pub k: StateFn,
    /// Volatility drift `a*(t, y)`.
    pub vol_drift: StateFn,
    /// Noise level ε of the volatility process.
    pub vol_noise: f64,
    pub f: VolMap,
}

impl SVMarketSpec {
    fn validate(&self) -> Result<()> {
        if !(self.x0 > 0.0) {
            return Err(CoreError::InvalidArgument("x0 must be > 0".into()));
        }
        // f positive and strictly monotone on a probe range
        let mut prev = f64::NEG_INFINITY;
        for i in -4..=4 {
            let v = (self.f.forward)(i as f64 * 0.5);
            if !(v > 0.0) || v <= prev {
                return Err(CoreError::InvalidArgument(
                    "f must be positive and strictly increasing on probes".into(),
                ));
            }
            prev = v;
        }
        Ok(())
    }
}

/// Bounded volatility misspecification `h(t, y)` with its band bound.
#[derive(Clone)]
pub struct VolPerturbation {
    pub h: StateFn,
    pub bound: f64,
}

impl VolPerturbation {
    pub fn constant(v: f64, bound: f64) -> Self {
        Self { h: Arc::new(move |_, _| v), bound }
    }
}

/// Simulated components of the market.
pub struct SVPaths {
    pub x: SamplePath,
    pub r: SamplePath,
    pub y: SamplePath,
    pub m0: SamplePath,
    pub w_sigma: SamplePath,
    /// Mean-variance tradeoff diagnostic `𝒦_T = ∫ k² ds`.
    pub mvt: f64,
}

/// Coupled Euler simulation of the market; the price is advanced in log
/// coordinates (exact Doléans discretization) so it stays positive.
///
/// Components of the noise stream: 1 = w^R, 2 = w^σ.
pub fn simulate_sv_market(
    spec: &SVMarketSpec,
    grid: &TimeGrid,
    seed: &SeedSpec,
    replicate: u64,
    h: Option<&VolPerturbation>,
    delta: f64,
) -> Result<SVPaths> {
    spec.validate()?;
    if let (Some(h), SigmaRef::Deterministic(s0)) = (h, &spec.sigma_ref) {
        // uniform ellipticity of the band: inf σ⁰ - δ·r must stay positive
        let inf_s0 = grid
            .nodes()
            .iter()
            .map(|&t| s0(t))
            .fold(f64::INFINITY, f64::min);
        if delta * h.bound >= inf_s0 {
            return Err(CoreError::Ellipticity(format!(
                "band half-width δ·r = {:.6} >= inf σ⁰ = {:.6}",
                delta * h.bound,
                inf_s0
            )));
        }
    }

    let dwr = wiener_increments(grid, seed, replicate, 1);
    let dws = wiener_increments(grid, seed, replicate, 2);
    let nodes = grid.nodes();
    let n = grid.n_steps();

    let mut y = vec![0.0f64; n + 1];
    let mut wsig = vec![0.0f64; n + 1];
    let mut m0 = vec![0.0f64; n + 1];
    let mut r = vec![0.0f64; n + 1];
    let mut logx = vec![spec.x0.ln(); n + 1];
    let mut mvt = 0.0;

    for j in 0..n {
        let (t, dt) = (nodes[j], grid.dt(j));
        let yj = y[j];
        let kj = (spec.k)(t, yj);
        let sigma0 = match &spec.sigma_ref {
            SigmaRef::FromVol => (spec.f.forward)(yj).sqrt(),
            SigmaRef::Deterministic(s0) => s0(t),
        };
        let sigma = match h {
            Some(hp) => {
                let hv = (hp.h)(t, yj);
                if hv.abs() > hp.bound * (1.0 + 1e-12) {
                    return Err(CoreError::PerturbationBound {
                        s: t,
                        value: hv.abs(),
                        bound: hp.bound,
                    });
                }
                sigma0 + delta * hv
            }
            None => sigma0,
        };
        if !(sigma > 0.0) {
            return Err(CoreError::Ellipticity(format!(
                "effective volatility {sigma:.6} <= 0 at t = {t:.6}"
            )));
        }
        let dm0 = kj * dt + dwr[j];
        m0[j + 1] = m0[j] + dm0;
        r[j + 1] = r[j] + sigma * dm0;
        logx[j + 1] = logx[j] + sigma * dm0 - 0.5 * sigma * sigma * dt;
        y[j + 1] = yj + (spec.vol_drift)(t, yj) * dt + spec.vol_noise * dws[j];
        wsig[j + 1] = wsig[j] + dws[j];
        mvt += kj * kj * dt;
        if !logx[j + 1].is_finite() || !y[j + 1].is_finite() {
            return Err(CoreError::OdeBlowUp { time: nodes[j + 1], value: y[j + 1] });
        }
    }

    let x: Vec<f64> = logx.into_iter().map(f64::exp).collect();
    Ok(SVPaths {
        x: SamplePath::scalar(grid.clone(), x)?,
        r: SamplePath::scalar(grid.clone(), r)?,
        y: SamplePath::scalar(grid.clone(), y)?,
        m0: SamplePath::scalar(grid.clone(), m0)?,
        w_sigma: SamplePath::scalar(grid.clone(), wsig)?,
        mvt,
    })
}
