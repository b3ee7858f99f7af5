//! Standardizing-matrix and truncation-level tuning for the optimal
//! B-robust influence function.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};
use crate::grid::{trapezoid, TimeGrid};
use crate::model::{ParamDriftModel, PathPrefix};
use crate::sde::solve_limit_ode;

use super::{huber, prefix_at, InfluenceSpec};

const FP_STEP: f64 = 0.5;
const FP_MAX_ITER: usize = 500;
const FP_TOL: f64 = 1e-10;
// plateau detection: no meaningful progress over this many iterations
const PLATEAU_WINDOW: usize = 50;
const PLATEAU_FACTOR: f64 = 1.0 - 1e-3;

fn gradient_table(
    model: &ParamDriftModel,
    alpha: &[f64],
    grid: &TimeGrid,
) -> Result<Vec<DVector<f64>>> {
    let limit = solve_limit_ode(model, alpha, grid)?;
    let m = model.param_dim;
    let mut out = Vec::with_capacity(grid.n_nodes());
    for j in 0..grid.n_nodes() {
        let p = prefix_at(&limit, j);
        let mut g = vec![0.0; m];
        model.drift_grad_into(&p, alpha, &mut g);
        out.push(DVector::from_vec(g));
    }
    Ok(out)
}

/// `∫ h_c(A ȧ) ȧ' ds` along the limit path.
fn clipped_gram(
    a: &DMatrix<f64>,
    c: f64,
    grads: &[DVector<f64>],
    nodes: &[f64],
) -> DMatrix<f64> {
    let m = a.nrows();
    let mut out = DMatrix::zeros(m, m);
    let mut buf = vec![0.0; grads.len()];
    // clip once per node, reuse across entries
    let clipped: Vec<DVector<f64>> = grads
        .iter()
        .map(|g| {
            let mut z = a * g;
            let norm = z.norm();
            if norm > c {
                z *= c / norm;
            }
            z
        })
        .collect();
    for r in 0..m {
        for s in 0..m {
            for (j, (z, g)) in clipped.iter().zip(grads).enumerate() {
                buf[j] = z[r] * g[s];
            }
            out[(r, s)] = trapezoid(nodes, &buf);
        }
    }
    out
}

/// Solve `∫ h_c(A ȧ) ȧ' ds = Id` for the standardizing matrix `A` by a
/// damped fixed-point iteration started at `I⁰(α)⁻¹`.
pub fn solve_a_star(
    model: &ParamDriftModel,
    alpha: &[f64],
    c: f64,
    grid: &TimeGrid,
) -> Result<DMatrix<f64>> {
    if !(c > 0.0) {
        return Err(CoreError::InvalidArgument("c must be > 0".into()));
    }
    let m = model.param_dim;
    let grads = gradient_table(model, alpha, grid)?;
    let nodes = grid.nodes();

    let mut fisher = DMatrix::zeros(m, m);
    {
        let mut buf = vec![0.0; grads.len()];
        for r in 0..m {
            for s in 0..m {
                for (j, g) in grads.iter().enumerate() {
                    buf[j] = g[r] * g[s];
                }
                fisher[(r, s)] = trapezoid(nodes, &buf);
            }
        }
    }
    let fisher_inv = fisher
        .clone()
        .try_inverse()
        .ok_or(CoreError::Singular("I⁰(α)"))?;

    let id = DMatrix::identity(m, m);
    let mut a = fisher_inv.clone();
    let mut best = f64::INFINITY;
    let mut best_iter = 0usize;
    for iter in 0..FP_MAX_ITER {
        let gram = clipped_gram(&a, c, &grads, nodes);
        let defect = &id - &gram;
        let residual = defect.norm();
        if residual < FP_TOL {
            return Ok(a);
        }
        if residual < best * PLATEAU_FACTOR {
            best = residual;
            best_iter = iter;
        } else if iter - best_iter >= PLATEAU_WINDOW {
            return Err(CoreError::InfeasibleClip { c, residual });
        }
        a += FP_STEP * defect * &fisher_inv;
    }
    let gram = clipped_gram(&a, c, &grads, nodes);
    let residual = (&id - gram).norm();
    if residual < FP_TOL {
        Ok(a)
    } else {
        Err(CoreError::NoConvergence { iterations: FP_MAX_ITER, residual })
    }
}

/// Optimal B-robust influence `ψ*(s, x; α) = h_c(A_c*(α) ȧ(s, x; α))`.
///
/// The standardizing matrix is computed at the supplied `α` and frozen
/// into the returned spec.
pub fn optimal_influence(
    model: &ParamDriftModel,
    alpha: &[f64],
    c: f64,
    grid: &TimeGrid,
) -> Result<InfluenceSpec> {
    let a = solve_a_star(model, alpha, c, grid)?;
    let m = model.param_dim;
    let a_owned = a.clone();
    let model_cl = model.clone();
    let psi = Arc::new(move |p: &PathPrefix, al: &[f64], out: &mut [f64]| {
        let mut g = vec![0.0; m];
        model_cl.drift_grad_into(p, al, &mut g);
        let z = &a_owned * DVector::from_vec(g);
        out.copy_from_slice(z.as_slice());
        huber::huber_clip_into(out, c).expect("c > 0 checked at construction");
    });
    let mut spec = InfluenceSpec::from_fn(m, psi);
    spec.clip_c = Some(c);
    spec.a_matrix = Some(a);
    Ok(spec)
}

/// Optimal 1-D truncation level: the root of
/// `r²c² = ∫ [ȧ]_{-c}^{c} ȧ ds - ∫ ([ȧ]_{-c}^{c})² ds` in `(0, sup|ȧ|)`.
pub fn solve_c_star(
    model: &ParamDriftModel,
    alpha: &[f64],
    r: f64,
    grid: &TimeGrid,
) -> Result<f64> {
    if model.param_dim != 1 {
        return Err(CoreError::Unsupported(
            "solve_c_star is defined for scalar parameters (m = 1)".into(),
        ));
    }
    if !(r > 0.0) {
        return Err(CoreError::InvalidArgument("r must be > 0".into()));
    }
    let grads = gradient_table(model, alpha, grid)?;
    let nodes = grid.nodes();
    let sup = grads.iter().map(|g| g[0].abs()).fold(0.0f64, f64::max);
    if sup == 0.0 {
        return Err(CoreError::Singular("ȧ ≡ 0 along the limit path"));
    }
    let g = |c: f64| -> f64 {
        let first: Vec<f64> = grads
            .iter()
            .map(|gr| huber::clip_interval(gr[0], -c, c) * gr[0])
            .collect();
        let second: Vec<f64> = grads
            .iter()
            .map(|gr| huber::clip_interval(gr[0], -c, c).powi(2))
            .collect();
        trapezoid(nodes, &first) - trapezoid(nodes, &second) - r * r * c * c
    };
    let mut lo = sup * 1e-12;
    let mut hi = sup;
    let (glo, ghi) = (g(lo), g(hi));
    if glo.signum() == ghi.signum() {
        let curve: Vec<(f64, f64)> = (1..=20)
            .map(|i| {
                let c = sup * i as f64 / 20.0;
                (c, g(c))
            })
            .collect();
        return Err(CoreError::NoBracket { upper: sup, curve });
    }
    // bisection; g(lo) > 0 > g(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm.abs() < 1e-14 || (hi - lo) < 1e-14 * sup {
            return Ok(mid);
        }
        if gm.signum() == glo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
