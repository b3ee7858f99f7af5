//! The four-stage pipeline: reconstruct the volatility path, estimate
//! the drift parameter robustly, map the confidence region to a
//! volatility band, and hedge against misspecification inside the band.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use rmv_core::brobust::{confidence_region, m_estimate};
use rmv_core::hedge::{
    gkw_decompose, risk_j, simulate_ensemble, strategy_general, HedgeProblem,
};
use rmv_core::io::{read_path_file, write_path_file};
use rmv_core::model::PathPrefix;
use rmv_core::sde::{simulate_sv_market, SVMarketSpec, SigmaRef, StateFn, VolPerturbation};
use rmv_core::vol::{realized_qv, vol_path_from_qv};
use rmv_core::{SamplePath, SeedSpec};

use crate::commands::{resolve_influence, stats_of, DjPoint, RegionReport, StrategyStats};
use crate::config::{
    build_vol_map, check_schema, read_json_file, BasisConfig, ContaminationConfig, GridConfig,
    ModelConfig, PayoffConfig, StateFnConfig, Truncation, SCHEMA_VERSION,
};
use crate::error::{CliError, CliResult};
use crate::report::{build_manifest, ensure_out_dir, write_json, write_strategy_csv};

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, Deserialize)]
pub struct PipelineSimulation {
    pub alpha_true: Vec<f64>,
    #[serde(default)]
    pub contamination: Option<ContaminationConfig>,
    #[serde(default)]
    pub replicate: u64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PipelineHedge {
    pub x0: f64,
    #[serde(default)]
    pub k: StateFnConfig,
    pub payoff: PayoffConfig,
    /// Band scale; the half-width of the volatility band is `delta · r`.
    pub delta: f64,
    #[serde(default)]
    pub capital: f64,
    pub grid: GridConfig,
    #[serde(default)]
    pub n_paths: Option<usize>,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default = "default_risk_paths")]
    pub risk_paths: usize,
}

fn default_risk_paths() -> usize {
    2000
}

#[derive(Debug, Clone, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data_csv: Option<String>,
    #[serde(default)]
    pub simulation: Option<PipelineSimulation>,
    pub model: ModelConfig,
    /// Contamination radius of the neighborhood.
    pub r: f64,
    pub c: Truncation,
    pub hedge: PipelineHedge,
    #[serde(default)]
    pub alpha_init: Option<Vec<f64>>,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Observation grid used when simulating the data.
    #[serde(default)]
    pub grid: Option<GridConfig>,
    /// Ensemble size of the hedging regression.
    #[serde(default)]
    pub replicates: Option<usize>,
    #[serde(default)]
    pub floor: Option<f64>,
    #[serde(default = "default_vol_map_name")]
    pub vol_map: String,
}

fn default_level() -> f64 {
    0.95
}

fn default_vol_map_name() -> String {
    "exp".into()
}

const KNOWN_KEYS: &[&str] = &[
    "schema_version",
    "seed",
    "data_csv",
    "simulation",
    "model",
    "r",
    "c",
    "hedge",
    "alpha_init",
    "level",
    "grid",
    "replicates",
    "floor",
    "vol_map",
];

const REQUIRED_KEYS: &[&str] = &["model", "r", "c", "hedge"];

/// Parse and validate a pipeline config; missing required fields are
/// reported all at once, unknown fields only warn.
pub fn load_config(path: &Path) -> CliResult<(PipelineConfig, Value)> {
    let v = read_json_file(path)?;
    check_schema(&v)?;
    let obj = v
        .as_object()
        .ok_or_else(|| CliError::Config("pipeline config must be a JSON object".into()))?;
    for key in obj.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            eprintln!("warning: unknown config field {key:?} ignored");
        }
    }
    let mut missing: Vec<&str> = REQUIRED_KEYS
        .iter()
        .filter(|k| !obj.contains_key(**k))
        .cloned()
        .collect();
    let has_data = obj.contains_key("data_csv");
    let has_sim = obj.contains_key("simulation");
    if !has_data && !has_sim {
        missing.push("data_csv | simulation");
    }
    if !missing.is_empty() {
        return Err(CliError::Config(format!(
            "missing required fields: {}",
            missing.join(", ")
        )));
    }
    if has_data && has_sim {
        return Err(CliError::Config(
            "exactly one of data_csv and simulation must be present, got both".into(),
        ));
    }
    let cfg: PipelineConfig = crate::config::from_value(v.clone())?;
    if let Some(p) = &cfg.data_csv {
        if !Path::new(p).exists() {
            return Err(CliError::Config(format!("data file {p} does not exist")));
        }
    }
    Ok((cfg, v))
}

// ---------------------------------------------------------------------------
// report

#[derive(Debug, Serialize)]
pub struct BandReport {
    /// Half-width `delta · r` of the volatility band.
    pub half_width: f64,
    pub sigma_center_min: f64,
    pub sigma_center_max: f64,
}

#[derive(Debug, Serialize)]
#[allow(non_snake_case)]
pub struct PipelineHedgeReport {
    pub J: f64,
    pub SE: f64,
    pub DJ_grid: Vec<DjPoint>,
    pub worst_case_J: f64,
    pub strategy_stats: StrategyStats,
    /// Risk of the non-robust comparator under the nominal band center.
    pub J_comparator: f64,
    pub SE_comparator: f64,
    /// Largest pointwise volatility correction along the nominal path.
    pub delta_t_max: f64,
}

#[derive(Debug, Serialize)]
pub struct PipelineReport {
    pub schema_version: u64,
    pub stages: Vec<String>,
    pub alpha_star: Vec<f64>,
    pub gamma_star: f64,
    pub c: f64,
    pub region: RegionReport,
    pub band: BandReport,
    pub hedge: PipelineHedgeReport,
}

// ---------------------------------------------------------------------------
// pipeline

struct Stage<'a>(&'a str);

impl Stage<'_> {
    fn wrap<T>(&self, r: CliResult<T>) -> CliResult<T> {
        r.map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("stage {}: {m}", self.0)),
            CliError::Numeric(m) => CliError::Numeric(format!("stage {}: {m}", self.0)),
        })
    }
}

pub fn run_pipeline(cfg: &PipelineConfig, raw: &Value, out: &Path) -> CliResult<PipelineReport> {
    ensure_out_dir(out)?;
    let seed = cfg.seed;
    let data_files: Vec<PathBuf> = cfg.data_csv.iter().map(PathBuf::from).collect();
    let refs: Vec<&Path> = data_files.iter().map(|p| p.as_path()).collect();
    let manifest = build_manifest(raw, &refs, seed)?;
    write_json(&out.join("manifest.json"), &manifest)?;

    let model = cfg.model.build()?;
    let vol_map = build_vol_map(&cfg.vol_map)?;
    let alpha_init = cfg
        .alpha_init
        .clone()
        .unwrap_or_else(|| vec![1.0; model.param_dim]);
    if alpha_init.len() != model.param_dim {
        return Err(CliError::Config(format!(
            "alpha_init has {} entries, model has {} parameters",
            alpha_init.len(),
            model.param_dim
        )));
    }

    // stage 1: observed yield path -> reconstructed volatility state
    let stage = Stage("reconstruct");
    let observed = match (&cfg.data_csv, &cfg.simulation) {
        (Some(p), None) => stage.wrap(read_path_file(Path::new(p)).map_err(CliError::from))?,
        (None, Some(sim)) => {
            let grid = cfg
                .grid
                .clone()
                .unwrap_or(GridConfig { t_end: cfg.model.t_end, n_steps: 1000 })
                .build()?;
            let mut spec = market_from_model(&model, &sim.alpha_true, cfg, SigmaRef::FromVol)?;
            if let Some(c) = &sim.contamination {
                // drift contamination of the state enters at order ε
                let base = spec.vol_drift.clone();
                let shift = model.epsilon * c.eta;
                spec.vol_drift = Arc::new(move |t, y| base(t, y) + shift) as StateFn;
            }
            let paths = stage.wrap(
                simulate_sv_market(&spec, &grid, &SeedSpec::new(seed), sim.replicate, None, 0.0)
                    .map_err(CliError::from),
            )?;
            paths.r
        }
        _ => unreachable!("load_config enforces exactly one source"),
    };
    let qv = stage.wrap(realized_qv(&observed).map_err(CliError::from))?;
    let floor = cfg.floor.or(Some(1e-8));
    let y_path = stage.wrap(
        vol_path_from_qv(&qv, &*vol_map.inverse, floor).map_err(CliError::from),
    )?;
    write_path_file(out.join("vol_path.csv"), &y_path)?;

    // stage 2: robust estimate on the reconstructed path
    let stage = Stage("estimate");
    let grid = y_path.grid().clone();
    let (psi, c_used) = stage.wrap(resolve_influence(
        &model,
        Some(&cfg.c),
        Some(cfg.r),
        &alpha_init,
        &grid,
    ))?;
    let est = stage.wrap(m_estimate(&model, &psi, &y_path, &alpha_init).map_err(CliError::from))?;
    let c_used = c_used.expect("pipeline always clips");

    // stage 3: confidence region and the volatility band around its center
    let stage = Stage("region");
    let region = stage.wrap(
        confidence_region(&model, &psi, &est.alpha_hat, &grid, cfg.level).map_err(CliError::from),
    )?;
    let limit = stage.wrap(
        rmv_core::sde::solve_limit_ode(&model, &est.alpha_hat, &grid).map_err(CliError::from),
    )?;
    let forward = vol_map.forward.clone();
    let sigma_center: Vec<f64> = limit
        .scalar_values()
        .iter()
        .map(|&y| (forward)(y).sqrt())
        .collect();
    let half_width = cfg.hedge.delta * cfg.r;
    let band = BandReport {
        half_width,
        sigma_center_min: sigma_center.iter().cloned().fold(f64::INFINITY, f64::min),
        sigma_center_max: sigma_center.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    };
    let center_path = SamplePath::scalar(grid.clone(), sigma_center)
        .map_err(|e| CliError::Numeric(e.to_string()))?;

    // stage 4: robust strategy against the band, non-robust comparator
    let stage = Stage("hedge");
    let hedge = stage.wrap(run_hedge_stage(cfg, &model, &est.alpha_hat, &center_path, seed, out))?;

    let report = PipelineReport {
        schema_version: SCHEMA_VERSION,
        stages: ["reconstruct", "estimate", "region", "hedge"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        alpha_star: est.alpha_hat.clone(),
        gamma_star: est.gamma_star,
        c: c_used,
        region: RegionReport {
            center: region.center,
            cov: (0..region.cov.nrows())
                .map(|i| (0..region.cov.ncols()).map(|j| region.cov[(i, j)]).collect())
                .collect(),
            epsilon: region.epsilon,
            level: region.level,
            quantile: region.quantile,
        },
        band,
        hedge,
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

/// Market whose volatility state follows the estimation model's drift
/// at the given parameter.
fn market_from_model(
    model: &rmv_core::ParamDriftModel,
    alpha: &[f64],
    cfg: &PipelineConfig,
    sigma_ref: SigmaRef,
) -> CliResult<SVMarketSpec> {
    let m = model.clone();
    let a = alpha.to_vec();
    let vol_drift: StateFn = Arc::new(move |t, y| m.drift(&PathPrefix::point(t, y), &a));
    Ok(SVMarketSpec {
        x0: cfg.hedge.x0,
        sigma_ref,
        k: cfg.hedge.k.build(),
        vol_drift,
        vol_noise: model.epsilon,
        f: build_vol_map(&cfg.vol_map)?,
    })
}

fn run_hedge_stage(
    cfg: &PipelineConfig,
    model: &rmv_core::ParamDriftModel,
    alpha_star: &[f64],
    center: &SamplePath,
    seed: u64,
    out: &Path,
) -> CliResult<PipelineHedgeReport> {
    let hcfg = &cfg.hedge;
    let grid = hcfg.grid.build()?;
    let n_paths = hcfg.n_paths.or(cfg.replicates).unwrap_or(2000);

    // robust problem: band center as the deterministic reference
    let c = center.clone();
    let sigma0 = Arc::new(move |t: f64| c.interpolate(t, 0));
    let robust_spec = market_from_model(model, alpha_star, cfg, SigmaRef::Deterministic(sigma0))?;
    let robust = HedgeProblem {
        market: robust_spec.clone(),
        delta: hcfg.delta,
        r: cfg.r,
        payoff: hcfg.payoff.build(),
        capital: hcfg.capital,
    };
    let fit_seed = SeedSpec::new(seed.wrapping_add(0xd1b5_4a32_d192_ed03));
    let eval_seed = SeedSpec::new(seed.wrapping_add(0x8cb9_2ba7_2f3d_8dd7));
    let ensemble = simulate_ensemble(&robust_spec, &grid, &fit_seed, n_paths, None, 0.0)?;
    let gkw = gkw_decompose(&robust, &ensemble, &hcfg.basis.build())?;
    let theta = strategy_general(&robust, gkw.clone());
    let nominal = risk_j(&robust, None, &theta, &grid, &eval_seed, hcfg.risk_paths)?;

    let band = robust.band_half_width();
    let mut dj_grid = Vec::new();
    for frac in [-1.0, -0.5, 0.5, 1.0] {
        let h = VolPerturbation::constant(frac * cfg.r, cfg.r);
        let est = rmv_core::hedge::gateaux_dj_general(&robust, &theta, &h, &gkw, &ensemble)?;
        dj_grid.push(DjPoint { fraction: frac, dj: est.value, se: est.std_err });
    }
    let mut worst = nominal.j.value;
    if band > 0.0 {
        for i in 0..5 {
            let frac = -1.0 + 0.5 * i as f64;
            let p = robust.clone();
            let sigma: rmv_core::hedge::StateRule =
                Arc::new(move |t, _x, y| p.sigma0(t, y) + frac * band);
            let rep = risk_j(&robust, Some(&sigma), &theta, &grid, &eval_seed, hcfg.risk_paths)?;
            worst = worst.max(rep.j.value);
        }
    }

    // non-robust comparator: volatility read off the fitted state
    let comp_spec = market_from_model(model, alpha_star, cfg, SigmaRef::FromVol)?;
    let comparator = HedgeProblem {
        market: comp_spec.clone(),
        delta: hcfg.delta,
        r: cfg.r,
        payoff: hcfg.payoff.build(),
        capital: hcfg.capital,
    };
    let comp_ensemble = simulate_ensemble(&comp_spec, &grid, &fit_seed, n_paths, None, 0.0)?;
    let comp_gkw = gkw_decompose(&comparator, &comp_ensemble, &hcfg.basis.build())?;
    let theta_tilde = strategy_general(&comparator, comp_gkw);
    let comp_risk = risk_j(&robust, None, &theta_tilde, &grid, &eval_seed, hcfg.risk_paths)?;

    // nominal replicate: positions of both strategies and the
    // pointwise correction between the fitted and central volatility
    let nominal_path = &ensemble[0];
    let positions = theta.positions(nominal_path)?;
    let positions_tilde = theta_tilde.positions(nominal_path)?;
    let map = build_vol_map(&cfg.vol_map)?;
    let delta_t: Vec<f64> = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let fitted = (map.forward)(nominal_path.y.at(j, 0)).sqrt();
            (fitted - center.interpolate(t, 0)).abs()
        })
        .collect();
    write_strategy_csv(
        &out.join("strategy.csv"),
        grid.nodes(),
        &positions,
        Some(&positions_tilde),
        Some(&delta_t),
    )?;

    Ok(PipelineHedgeReport {
        J: nominal.j.value,
        SE: nominal.j.std_err,
        DJ_grid: dj_grid,
        worst_case_J: worst,
        strategy_stats: stats_of(&positions, &grid),
        J_comparator: comp_risk.j.value,
        SE_comparator: comp_risk.j.std_err,
        delta_t_max: delta_t.iter().cloned().fold(0.0, f64::max),
    })
}
