//! Robust drift estimation for small-noise diffusions and mean-variance
//! robust hedging of contingent claims under misspecified volatility.
//!
//! The crate is organized around five layers:
//!
//! - [`grid`]/[`seed`]: time grids, sample paths, quadrature, and the
//!   deterministic parallel RNG contract;
//! - [`sde`]: Euler-Maruyama simulation of the nominal diffusion, its
//!   contaminated alternatives, the limit ODE, Doléans exponentials and
//!   the stochastic-volatility market;
//! - [`vol`]: latent-volatility reconstruction from realized quadratic
//!   variation;
//! - [`brobust`]: CULAN/M-estimation machinery and the optimal B-robust
//!   (Huber-clipped) influence function;
//! - [`hedge`]: mean-variance robust hedging, worst-case volatility,
//!   GKW projection and the stochastic-volatility pricing PDE.

pub mod error;
pub mod grid;
pub mod io;
pub mod model;
pub mod sde;
pub mod seed;
pub mod vol;

pub mod brobust;
pub mod hedge;

pub use error::{CoreError, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use grid::{quad_along_path, trapezoid, SamplePath, TimeGrid};
pub use model::{ParamDriftModel, PathPrefix};
pub use seed::SeedSpec;
