use thiserror::Error;

/// Errors produced by the numeric layers.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("non-finite integrand at node {node} (s = {s})")]
    NonFiniteIntegrand { node: usize, s: f64 },

    #[error("ODE solution blew up at s = {time} (|y| = {value:.3e})")]
    OdeBlowUp { time: f64, value: f64 },

    #[error("perturbation exceeds its bound at s = {s}: |h| = {value:.6} > {bound:.6}")]
    PerturbationBound { s: f64, value: f64, bound: f64 },

    #[error("quadratic variation must be nondecreasing from 0 (violated at node {0})")]
    DecreasingBracket(usize),

    #[error("volatility band breaks uniform ellipticity: {0}")]
    Ellipticity(String),

    #[error("nonpositive slope at node {node} (s = {s}); set a clamp floor or refine the window")]
    NonPositiveSlope { node: usize, s: f64 },

    #[error("matrix {0} is singular or rank-deficient")]
    Singular(&'static str),

    #[error("truncation level c = {c} is infeasible: residual plateaued at {residual:.3e}")]
    InfeasibleClip { c: f64, residual: f64 },

    #[error("solver failed to converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("no sign change when bracketing c in (0, {upper}); diagnostic curve: {curve:?}")]
    NoBracket { upper: f64, curve: Vec<(f64, f64)> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
