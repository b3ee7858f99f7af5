//! Limit matrices Γ₀, γ₀ and the Fisher information I⁰ along the limit
//! path, plus the asymptotic covariance they induce.

use nalgebra::DMatrix;

use crate::error::{CoreError, Result};
use crate::grid::{trapezoid, TimeGrid};
use crate::model::ParamDriftModel;
use crate::sde::solve_limit_ode;

use super::{prefix_at, InfluenceSpec};

const RANK_EPS: f64 = 1e-10;

/// Limit matrices of an influence functional along `Y⁰(α)`.
#[derive(Debug, Clone)]
pub struct LimitMatrices {
    /// `Γ₀ = ∫ ψψ' ds`.
    pub big_gamma: DMatrix<f64>,
    /// `γ₀ = ∫ ψȧ' ds`.
    pub small_gamma: DMatrix<f64>,
    /// `I⁰ = ∫ ȧȧ' ds`.
    pub fisher: DMatrix<f64>,
    pub big_gamma_rank: usize,
    pub small_gamma_rank: usize,
    /// Whether both ranks are full (the Ψ₀ membership check).
    pub full_rank: bool,
}

/// Trapezoidal integrals of `ψψ'`, `ψȧ'` and `ȧȧ'` along the limit path.
pub fn limit_matrices(
    model: &ParamDriftModel,
    psi: &InfluenceSpec,
    alpha: &[f64],
    grid: &TimeGrid,
) -> Result<LimitMatrices> {
    let m = model.param_dim;
    if psi.dim != m {
        return Err(CoreError::InvalidArgument(format!(
            "influence dimension {} does not match parameter dimension {m}",
            psi.dim
        )));
    }
    let limit = solve_limit_ode(model, alpha, grid)?;
    let n_nodes = grid.n_nodes();

    let mut psi_vals = vec![0.0; n_nodes * m];
    let mut grad_vals = vec![0.0; n_nodes * m];
    for j in 0..n_nodes {
        let p = prefix_at(&limit, j);
        psi.eval_into(&p, alpha, &mut psi_vals[j * m..(j + 1) * m]);
        model.drift_grad_into(&p, alpha, &mut grad_vals[j * m..(j + 1) * m]);
    }

    let integrate = |a: &[f64], b: &[f64]| -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m, m);
        let mut buf = vec![0.0; n_nodes];
        for r in 0..m {
            for c in 0..m {
                for j in 0..n_nodes {
                    buf[j] = a[j * m + r] * b[j * m + c];
                }
                out[(r, c)] = trapezoid(grid.nodes(), &buf);
            }
        }
        out
    };

    let big_gamma = integrate(&psi_vals, &psi_vals);
    let small_gamma = integrate(&psi_vals, &grad_vals);
    let fisher = integrate(&grad_vals, &grad_vals);

    let scale = |mat: &DMatrix<f64>| RANK_EPS * (1.0 + mat.norm());
    let big_gamma_rank = big_gamma.clone().rank(scale(&big_gamma));
    let small_gamma_rank = small_gamma.clone().rank(scale(&small_gamma));
    Ok(LimitMatrices {
        full_rank: big_gamma_rank == m && small_gamma_rank == m,
        big_gamma,
        small_gamma,
        fisher,
        big_gamma_rank,
        small_gamma_rank,
    })
}

/// `V(ψ; α) = γ₀⁻¹ Γ₀ (γ₀⁻¹)'`.
pub fn asymptotic_cov(lm: &LimitMatrices) -> Result<DMatrix<f64>> {
    let inv = lm
        .small_gamma
        .clone()
        .try_inverse()
        .ok_or(CoreError::Singular("γ₀"))?;
    Ok(&inv * &lm.big_gamma * inv.transpose())
}
