//! JSON configuration vocabulary shared by the subcommands.
//!
//! Every config file carries an optional `schema_version` (current: 1).
//! Builders translate the serde structs into the closures of the core
//! crate; a name outside the documented vocabulary is a config error.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use rmv_core::hedge::{Basis, PayoffFn, PdeLattice};
use rmv_core::model::{models, ParamDriftModel};
use rmv_core::sde::{ContaminationSpec, SVMarketSpec, SigmaRef, StateFn, VolMap};
use rmv_core::TimeGrid;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u64 = 1;

pub fn read_json_file(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", path.display())))
}

/// Reject files written for a different schema revision.
pub fn check_schema(v: &Value) -> CliResult<()> {
    match v.get("schema_version") {
        None => Ok(()),
        Some(s) => match s.as_u64() {
            Some(n) if n == SCHEMA_VERSION => Ok(()),
            Some(n) => Err(CliError::Config(format!(
                "unsupported schema_version {n} (expected {SCHEMA_VERSION})"
            ))),
            None => Err(CliError::Config("schema_version must be an integer".into())),
        },
    }
}

pub fn from_value<T: serde::de::DeserializeOwned>(v: Value) -> CliResult<T> {
    serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))
}

pub fn load<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let v = read_json_file(path)?;
    check_schema(&v)?;
    from_value(v)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub t_end: f64,
    pub n_steps: usize,
}

impl GridConfig {
    pub fn build(&self) -> CliResult<TimeGrid> {
        Ok(TimeGrid::uniform(self.t_end, self.n_steps)?)
    }
}

/// Parametric drift families of the estimation model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: String,
    pub epsilon: f64,
    pub t_end: f64,
}

impl ModelConfig {
    pub fn build(&self) -> CliResult<ParamDriftModel> {
        match self.family.as_str() {
            "constant" => Ok(models::constant_drift(self.epsilon, self.t_end)),
            "ou" => Ok(models::ou(self.epsilon, self.t_end)),
            "mean-revert" => Ok(models::mean_revert(self.epsilon, self.t_end)),
            other => Err(CliError::Config(format!(
                "unknown model family {other:?} (expected constant | ou | mean-revert)"
            ))),
        }
    }
}

/// State-feedback coefficient vocabulary for `k(t, y)` and `a*(t, y)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum StateFnConfig {
    Zero,
    Constant { value: f64 },
    /// `base + scale·tanh(y)`.
    Tanh { base: f64, scale: f64 },
    /// `rate·(level − y)`.
    MeanRevert { rate: f64, level: f64 },
}

impl StateFnConfig {
    pub fn build(&self) -> StateFn {
        match *self {
            StateFnConfig::Zero => Arc::new(|_, _| 0.0),
            StateFnConfig::Constant { value } => Arc::new(move |_, _| value),
            StateFnConfig::Tanh { base, scale } => Arc::new(move |_, y| base + scale * y.tanh()),
            StateFnConfig::MeanRevert { rate, level } => {
                Arc::new(move |_, y| rate * (level - y))
            }
        }
    }
}

impl Default for StateFnConfig {
    fn default() -> Self {
        StateFnConfig::Zero
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SigmaRefConfig {
    FromVol,
    Constant { value: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketConfig {
    pub x0: f64,
    pub sigma_ref: SigmaRefConfig,
    #[serde(default)]
    pub k: StateFnConfig,
    #[serde(default)]
    pub vol_drift: StateFnConfig,
    #[serde(default)]
    pub vol_noise: f64,
    #[serde(default = "default_vol_map")]
    pub vol_map: String,
}

fn default_vol_map() -> String {
    "exp".into()
}

pub fn build_vol_map(name: &str) -> CliResult<VolMap> {
    match name {
        "exp" => Ok(VolMap::exp()),
        other => Err(CliError::Config(format!(
            "unknown vol_map {other:?} (expected exp)"
        ))),
    }
}

impl MarketConfig {
    pub fn build(&self) -> CliResult<SVMarketSpec> {
        let sigma_ref = match self.sigma_ref {
            SigmaRefConfig::FromVol => SigmaRef::FromVol,
            SigmaRefConfig::Constant { value } => {
                SigmaRef::Deterministic(Arc::new(move |_| value))
            }
        };
        Ok(SVMarketSpec {
            x0: self.x0,
            sigma_ref,
            k: self.k.build(),
            vol_drift: self.vol_drift.build(),
            vol_noise: self.vol_noise,
            f: build_vol_map(&self.vol_map)?,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum PayoffConfig {
    /// `(X_T − strike)⁺`.
    Call { strike: f64 },
    /// `X_T`.
    Terminal,
}

impl PayoffConfig {
    pub fn build(&self) -> PayoffFn {
        match *self {
            PayoffConfig::Call { strike } => {
                Arc::new(move |p: &rmv_core::sde::SVPaths| (p.x.terminal() - strike).max(0.0))
            }
            PayoffConfig::Terminal => Arc::new(|p: &rmv_core::sde::SVPaths| p.x.terminal()),
        }
    }

    /// Terminal condition on the (x, y) lattice of the pricing PDE.
    pub fn build_xy(&self) -> Arc<dyn Fn(f64, f64) -> f64 + Send + Sync> {
        match *self {
            PayoffConfig::Call { strike } => Arc::new(move |x, _| (x - strike).max(0.0)),
            PayoffConfig::Terminal => Arc::new(|x, _| x),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum BasisConfig {
    Default,
    Quadratic,
    Hinge { knots: Vec<f64> },
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig::Default
    }
}

impl BasisConfig {
    pub fn build(&self) -> Basis {
        match self {
            BasisConfig::Default => Basis::default_xy(),
            BasisConfig::Quadratic => Basis::quadratic_xy(),
            BasisConfig::Hinge { knots } => Basis::hinge_xy(knots),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContaminationConfig {
    pub eta: f64,
    pub bound: f64,
}

impl ContaminationConfig {
    pub fn build(&self) -> CliResult<ContaminationSpec> {
        Ok(ContaminationSpec::constant(self.eta, self.bound)?)
    }
}

/// Truncation level: an explicit number or `"auto"` (solve for c*).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Truncation {
    Level(f64),
    Keyword(String),
}

impl Truncation {
    pub fn is_auto(&self) -> CliResult<bool> {
        match self {
            Truncation::Level(c) if *c > 0.0 => Ok(false),
            Truncation::Level(c) => {
                Err(CliError::Config(format!("truncation c must be > 0, got {c}")))
            }
            Truncation::Keyword(s) if s == "auto" => Ok(true),
            Truncation::Keyword(s) => Err(CliError::Config(format!(
                "truncation must be a positive number or \"auto\", got {s:?}"
            ))),
        }
    }

    pub fn level(&self) -> Option<f64> {
        match self {
            Truncation::Level(c) => Some(*c),
            Truncation::Keyword(_) => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub t_end: f64,
    pub n_t: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub n_y: usize,
}

impl LatticeConfig {
    pub fn build(&self) -> PdeLattice {
        PdeLattice {
            t_end: self.t_end,
            n_t: self.n_t,
            x_min: self.x_min,
            x_max: self.x_max,
            n_x: self.n_x,
            y_min: self.y_min,
            y_max: self.y_max,
            n_y: self.n_y,
        }
    }
}
