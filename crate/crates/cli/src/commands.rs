//! Implementations of the single-stage subcommands.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use rmv_core::brobust::{
    confidence_region, gross_error_sensitivity, m_estimate, mc_study, optimal_influence,
    solve_a_star, solve_c_star, InfluenceSpec, McConfig,
};
use rmv_core::hedge::{
    gateaux_dj_general, gkw_decompose, risk_j, simulate_ensemble, strategy_general, sv_pde_price,
    HedgeProblem, StateRule, StrategyRule,
};
use rmv_core::io::{read_path_file, write_path_file};
use rmv_core::sde::{simulate_contaminated, simulate_small_noise, simulate_sv_market};
use rmv_core::vol::{realized_qv, vol_path_from_qv};
use rmv_core::{SamplePath, SeedSpec, TimeGrid};

use crate::config::{
    build_vol_map, BasisConfig, ContaminationConfig, GridConfig, LatticeConfig, MarketConfig,
    ModelConfig, PayoffConfig, Truncation, SCHEMA_VERSION,
};
use crate::error::{CliError, CliResult};
use crate::report::{write_json, write_strategy_csv};

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SimulateConfig {
    /// One path of the small-noise estimation diffusion.
    Drift {
        model: ModelConfig,
        alpha: Vec<f64>,
        grid: GridConfig,
        #[serde(default)]
        contamination: Option<ContaminationConfig>,
        #[serde(default)]
        replicate: u64,
    },
    /// One path of the coupled price/volatility market.
    Market {
        market: MarketConfig,
        grid: GridConfig,
        #[serde(default)]
        replicate: u64,
    },
}

pub fn run_simulate(cfg: &SimulateConfig, seed: u64, out: &Path) -> CliResult<()> {
    let seed = SeedSpec::new(seed);
    match cfg {
        SimulateConfig::Drift { model, alpha, grid, contamination, replicate } => {
            let model = model.build()?;
            let grid = grid.build()?;
            let path = match contamination {
                None => simulate_small_noise(&model, alpha, &grid, &seed, *replicate)?,
                Some(c) => {
                    simulate_contaminated(&model, alpha, &c.build()?, &grid, &seed, *replicate)?
                }
            };
            write_path_file(out.join("path.csv"), &path)?;
        }
        SimulateConfig::Market { market, grid, replicate } => {
            let spec = market.build()?;
            let grid = grid.build()?;
            let paths = simulate_sv_market(&spec, &grid, &seed, *replicate, None, 0.0)?;
            write_path_file(out.join("x.csv"), &paths.x)?;
            write_path_file(out.join("r.csv"), &paths.r)?;
            write_path_file(out.join("y.csv"), &paths.y)?;
            write_path_file(out.join("m0.csv"), &paths.m0)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// reconstruct

#[derive(Debug, Clone, Deserialize)]
pub struct ReconstructConfig {
    /// CSV path of the observed scalar yield path.
    pub data: String,
    #[serde(default = "crate::commands::default_exp")]
    pub vol_map: String,
    #[serde(default)]
    pub floor: Option<f64>,
    #[serde(default)]
    pub window: Option<usize>,
}

pub(crate) fn default_exp() -> String {
    "exp".into()
}

pub fn run_reconstruct(cfg: &ReconstructConfig, out: &Path) -> CliResult<()> {
    let data = Path::new(&cfg.data);
    if !data.exists() {
        return Err(CliError::Config(format!("data file {} does not exist", cfg.data)));
    }
    let r = read_path_file(data)?;
    let mut qv = realized_qv(&r)?;
    if let Some(w) = cfg.window {
        if w == 0 {
            return Err(CliError::Config("window must be >= 1".into()));
        }
        qv.window = w;
    }
    let map = build_vol_map(&cfg.vol_map)?;
    let inv = map.inverse.clone();
    let y = vol_path_from_qv(&qv, &*inv, cfg.floor)?;
    let qv_path = SamplePath::scalar(qv.grid.clone(), qv.cumulative.clone())?;
    write_path_file(out.join("qv.csv"), &qv_path)?;
    write_path_file(out.join("vol_path.csv"), &y)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// estimate

#[derive(Debug, Clone, Deserialize)]
pub struct SimulatedData {
    pub alpha_true: Vec<f64>,
    #[serde(default)]
    pub contamination: Option<ContaminationConfig>,
    #[serde(default)]
    pub replicate: u64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct EstimateConfig {
    #[serde(default)]
    pub data: Option<String>,
    #[serde(default)]
    pub simulation: Option<SimulatedData>,
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    /// Truncation of the optimal influence; omitted = unclipped score.
    #[serde(default)]
    pub c: Option<Truncation>,
    /// Contamination radius, required when `c` is `"auto"`.
    #[serde(default)]
    pub r: Option<f64>,
    pub alpha_init: Vec<f64>,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Serialize)]
pub struct RegionReport {
    pub center: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub level: f64,
    pub quantile: f64,
}

#[derive(Debug, Serialize)]
pub struct EstimateReport {
    pub schema_version: u64,
    pub alpha_hat: Vec<f64>,
    pub gamma_star: f64,
    pub iterations: usize,
    pub residual: f64,
    pub c: Option<f64>,
    pub region: RegionReport,
}

/// Resolve the truncation level and build the influence function at the
/// working point `alpha`.
pub fn resolve_influence(
    model: &rmv_core::ParamDriftModel,
    c: Option<&Truncation>,
    r: Option<f64>,
    alpha: &[f64],
    grid: &TimeGrid,
) -> CliResult<(InfluenceSpec, Option<f64>)> {
    match c {
        None => Ok((InfluenceSpec::score(model), None)),
        Some(t) => {
            let level = if t.is_auto()? {
                let r = r.ok_or_else(|| {
                    CliError::Config("c = \"auto\" requires the contamination radius r".into())
                })?;
                solve_c_star(model, alpha, r, grid)?
            } else {
                t.level().unwrap()
            };
            let psi = optimal_influence(model, alpha, level, grid)?;
            Ok((psi, Some(level)))
        }
    }
}

pub fn run_estimate(cfg: &EstimateConfig, seed: u64, out: &Path) -> CliResult<EstimateReport> {
    match (&cfg.data, &cfg.simulation) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "exactly one of data and simulation must be present, got both".into(),
            ))
        }
        (None, None) => {
            return Err(CliError::Config(
                "exactly one of data and simulation must be present, got neither".into(),
            ))
        }
        _ => {}
    }
    let model = cfg.model.build()?;
    let path = match (&cfg.data, &cfg.simulation) {
        (Some(p), None) => {
            let p = Path::new(p);
            if !p.exists() {
                return Err(CliError::Config(format!("data file {} does not exist", p.display())));
            }
            read_path_file(p)?
        }
        (None, Some(sim)) => {
            let grid = cfg
                .grid
                .clone()
                .unwrap_or(GridConfig { t_end: cfg.model.t_end, n_steps: 1000 })
                .build()?;
            let seed = SeedSpec::new(seed);
            match &sim.contamination {
                None => simulate_small_noise(&model, &sim.alpha_true, &grid, &seed, sim.replicate)?,
                Some(c) => simulate_contaminated(
                    &model,
                    &sim.alpha_true,
                    &c.build()?,
                    &grid,
                    &seed,
                    sim.replicate,
                )?,
            }
        }
        _ => unreachable!(),
    };
    let grid = path.grid().clone();
    let (psi, c_used) = resolve_influence(&model, cfg.c.as_ref(), cfg.r, &cfg.alpha_init, &grid)?;
    let est = m_estimate(&model, &psi, &path, &cfg.alpha_init)?;
    let region = confidence_region(&model, &psi, &est.alpha_hat, &grid, cfg.level)?;
    let report = EstimateReport {
        schema_version: SCHEMA_VERSION,
        alpha_hat: est.alpha_hat,
        gamma_star: est.gamma_star,
        iterations: est.iterations,
        residual: est.residual,
        c: c_used,
        region: RegionReport {
            center: region.center,
            cov: matrix_rows(&region.cov),
            epsilon: region.epsilon,
            level: region.level,
            quantile: region.quantile,
        },
    };
    write_json(&out.join("estimate.json"), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// ctune

#[derive(Debug, Clone, Deserialize)]
pub struct CtuneConfig {
    pub model: ModelConfig,
    pub alpha: Vec<f64>,
    pub r: f64,
    #[serde(default)]
    pub grid: Option<GridConfig>,
}

#[derive(Debug, Serialize)]
pub struct CtuneReport {
    pub schema_version: u64,
    pub c_star: f64,
    pub a_star: Vec<Vec<f64>>,
    pub gamma_star: f64,
}

pub fn run_ctune(cfg: &CtuneConfig, out: &Path) -> CliResult<CtuneReport> {
    let model = cfg.model.build()?;
    let grid = cfg
        .grid
        .clone()
        .unwrap_or(GridConfig { t_end: cfg.model.t_end, n_steps: 1000 })
        .build()?;
    let c_star = solve_c_star(&model, &cfg.alpha, cfg.r, &grid)?;
    let a_star = solve_a_star(&model, &cfg.alpha, c_star, &grid)?;
    let psi = optimal_influence(&model, &cfg.alpha, c_star, &grid)?;
    let gamma = gross_error_sensitivity(&model, &psi, &cfg.alpha, &grid)?;
    let report = CtuneReport {
        schema_version: SCHEMA_VERSION,
        c_star,
        a_star: matrix_rows(&a_star),
        gamma_star: gamma,
    };
    write_json(&out.join("ctune.json"), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// hedge

#[derive(Debug, Clone, Deserialize)]
pub struct HedgeConfig {
    pub market: MarketConfig,
    pub payoff: PayoffConfig,
    pub delta: f64,
    pub r: f64,
    #[serde(default)]
    pub capital: f64,
    pub grid: GridConfig,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub basis: BasisConfig,
    /// Band fractions probed by the Gateaux differential.
    #[serde(default = "default_dj_fractions")]
    pub dj_fractions: Vec<f64>,
    #[serde(default = "default_sigma_grid")]
    pub sigma_grid: usize,
    #[serde(default = "default_risk_paths")]
    pub risk_paths: usize,
}

fn default_n_paths() -> usize {
    20_000
}

fn default_dj_fractions() -> Vec<f64> {
    vec![-1.0, -0.5, 0.5, 1.0]
}

fn default_sigma_grid() -> usize {
    9
}

fn default_risk_paths() -> usize {
    4000
}

#[derive(Debug, Serialize)]
pub struct DjPoint {
    pub fraction: f64,
    pub dj: f64,
    pub se: f64,
}

#[derive(Debug, Serialize)]
pub struct StrategyStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Sample mean of `∫|θ|² dt`.
    pub admissibility: f64,
}

#[derive(Debug, Serialize)]
#[allow(non_snake_case)]
pub struct HedgeReport {
    pub schema_version: u64,
    pub J: f64,
    pub SE: f64,
    pub DJ_grid: Vec<DjPoint>,
    pub worst_case_J: f64,
    pub strategy_stats: StrategyStats,
}

pub fn stats_of(theta: &[f64], grid: &TimeGrid) -> StrategyStats {
    let n = theta.len().max(1) as f64;
    let mean = theta.iter().sum::<f64>() / n;
    let var = theta.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    let mut adm = 0.0;
    for j in 0..grid.n_steps().min(theta.len()) {
        adm += theta[j] * theta[j] * grid.dt(j);
    }
    StrategyStats {
        mean,
        std: var.sqrt(),
        min: theta.iter().cloned().fold(f64::INFINITY, f64::min),
        max: theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        admissibility: adm,
    }
}

pub fn run_hedge(cfg: &HedgeConfig, seed: u64, out: &Path) -> CliResult<HedgeReport> {
    let spec = cfg.market.build()?;
    let grid = cfg.grid.build()?;
    let problem = HedgeProblem {
        market: spec.clone(),
        delta: cfg.delta,
        r: cfg.r,
        payoff: cfg.payoff.build(),
        capital: cfg.capital,
    };
    let fit_seed = SeedSpec::new(seed);
    // disjoint master for risk evaluation so the fit is out of sample
    let eval_seed = SeedSpec::new(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let ensemble = simulate_ensemble(&spec, &grid, &fit_seed, cfg.n_paths, None, 0.0)?;
    let gkw = gkw_decompose(&problem, &ensemble, &cfg.basis.build())?;
    let theta = strategy_general(&problem, gkw.clone());

    let nominal = risk_j(&problem, None, &theta, &grid, &eval_seed, cfg.risk_paths)?;

    let band = problem.band_half_width();
    let mut dj_grid = Vec::new();
    for &frac in &cfg.dj_fractions {
        let h = rmv_core::sde::VolPerturbation::constant(frac * cfg.r, cfg.r);
        let est = gateaux_dj_general(&problem, &theta, &h, &gkw, &ensemble)?;
        dj_grid.push(DjPoint { fraction: frac, dj: est.value, se: est.std_err });
    }

    let mut worst = nominal.j.value;
    if band > 0.0 && cfg.sigma_grid > 1 {
        for i in 0..cfg.sigma_grid {
            let frac = -1.0 + 2.0 * i as f64 / (cfg.sigma_grid - 1) as f64;
            let p = problem.clone();
            let sigma: StateRule = Arc::new(move |t, _x, y| p.sigma0(t, y) + frac * band);
            let rep = risk_j(&problem, Some(&sigma), &theta, &grid, &eval_seed, cfg.risk_paths)?;
            worst = worst.max(rep.j.value);
        }
    }

    let positions = theta.positions(&ensemble[0])?;
    let report = HedgeReport {
        schema_version: SCHEMA_VERSION,
        J: nominal.j.value,
        SE: nominal.j.std_err,
        DJ_grid: dj_grid,
        worst_case_J: worst,
        strategy_stats: stats_of(&positions, &grid),
    };
    write_strategy_csv(&out.join("strategy.csv"), grid.nodes(), &positions, None, None)?;
    write_json(&out.join("risk_report.json"), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// pde

#[derive(Debug, Clone, Deserialize)]
pub struct PdeConfig {
    pub market: MarketConfig,
    pub payoff: PayoffConfig,
    pub lattice: LatticeConfig,
}

pub fn run_pde(cfg: &PdeConfig, out: &Path) -> CliResult<()> {
    let spec = cfg.market.build()?;
    let surface = sv_pde_price(&spec, cfg.payoff.build_xy(), &cfg.lattice.build())?;
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(out.join("surface.csv"))?);
    writeln!(f, "t,x,y,v").map_err(CliError::from)?;
    for (it, &t) in surface.t.iter().enumerate() {
        for (ix, &x) in surface.x.iter().enumerate() {
            for (iy, &y) in surface.y.iter().enumerate() {
                writeln!(f, "{t:.17e},{x:.17e},{y:.17e},{:.17e}", surface.value(it, ix, iy))?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// mc

#[derive(Debug, Clone, Deserialize)]
pub struct McCliConfig {
    pub model: ModelConfig,
    pub alpha_true: Vec<f64>,
    pub alpha_init: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub c: Option<Truncation>,
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default)]
    pub contamination: Option<ContaminationConfig>,
}

fn default_replicates() -> usize {
    2000
}

#[derive(Debug, Serialize)]
pub struct McCliReport {
    pub schema_version: u64,
    pub n_rep: usize,
    pub n_failed: usize,
    pub mean_alpha: Vec<f64>,
    pub mean_std: Vec<f64>,
    pub cov_std: Vec<Vec<f64>>,
    pub se_mean_std: Vec<f64>,
    pub skewness: Vec<f64>,
    pub kurtosis: Vec<f64>,
    pub c: Option<f64>,
}

pub fn run_mc(cfg: &McCliConfig, seed: u64, out: &Path) -> CliResult<McCliReport> {
    let model = cfg.model.build()?;
    let grid = cfg
        .grid
        .clone()
        .unwrap_or(GridConfig { t_end: cfg.model.t_end, n_steps: 1000 })
        .build()?;
    let (psi, c_used) = resolve_influence(&model, cfg.c.as_ref(), cfg.r, &cfg.alpha_true, &grid)?;
    let contamination = match &cfg.contamination {
        None => None,
        Some(c) => Some(c.build()?),
    };
    let mc = McConfig {
        n_rep: cfg.replicates,
        alpha_true: cfg.alpha_true.clone(),
        alpha_init: cfg.alpha_init.clone(),
        contamination,
    };
    let rep = mc_study(&model, &psi, &grid, &SeedSpec::new(seed), &mc)?;
    let report = McCliReport {
        schema_version: SCHEMA_VERSION,
        n_rep: rep.n_rep,
        n_failed: rep.n_failed,
        mean_alpha: rep.mean_alpha,
        mean_std: rep.mean_std,
        cov_std: matrix_rows(&rep.cov_std),
        se_mean_std: rep.se_mean_std,
        skewness: rep.skewness,
        kurtosis: rep.kurtosis,
        c: c_used,
    };
    write_json(&out.join("mc.json"), &report)?;
    Ok(report)
}

/// Positions of a strategy along one replicate, for CSV emission.
pub fn positions_on(theta: &StrategyRule, paths: &rmv_core::sde::SVPaths) -> CliResult<Vec<f64>> {
    Ok(theta.positions(paths)?)
}
