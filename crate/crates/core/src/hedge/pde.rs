//! Backward pricing PDE of the stochastic-volatility market,
//! `v_t + a* v_y + ½(ε² v_yy + x² f(y) v_xx) = 0`, solved by a
//! Douglas ADI realization of Crank-Nicolson with positive-coefficient
//! upwinding in `y` and a Rannacher start.

use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::sde::SVMarketSpec;

/// Rectangular `(t, x, y)` lattice; step counts, not node counts.
#[derive(Debug, Clone)]
pub struct PdeLattice {
    pub t_end: f64,
    pub n_t: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub n_y: usize,
}

impl PdeLattice {
    fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0) || self.n_t == 0 {
            return Err(CoreError::InvalidGrid("t_end > 0 and n_t >= 1 required".into()));
        }
        if !(self.x_max > self.x_min) || self.x_min < 0.0 || self.n_x < 2 {
            return Err(CoreError::InvalidGrid(
                "need 0 <= x_min < x_max and n_x >= 2".into(),
            ));
        }
        if !(self.y_max > self.y_min) || self.n_y < 2 {
            return Err(CoreError::InvalidGrid("need y_min < y_max and n_y >= 2".into()));
        }
        Ok(())
    }
}

/// Value surface on the lattice with finite-difference derivatives.
pub struct PdeSurface {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    v: Vec<f64>,
}

impl PdeSurface {
    fn idx(&self, it: usize, ix: usize, iy: usize) -> usize {
        (it * self.x.len() + ix) * self.y.len() + iy
    }

    pub fn value(&self, it: usize, ix: usize, iy: usize) -> f64 {
        self.v[self.idx(it, ix, iy)]
    }

    /// `∂v/∂x` by central differences (one-sided at the edges).
    pub fn dv_dx(&self, it: usize, ix: usize, iy: usize) -> f64 {
        let (lo, hi) = (ix.saturating_sub(1), (ix + 1).min(self.x.len() - 1));
        (self.value(it, hi, iy) - self.value(it, lo, iy)) / (self.x[hi] - self.x[lo])
    }

    /// `∂v/∂y` by central differences (one-sided at the edges).
    pub fn dv_dy(&self, it: usize, ix: usize, iy: usize) -> f64 {
        let (lo, hi) = (iy.saturating_sub(1), (iy + 1).min(self.y.len() - 1));
        (self.value(it, ix, hi) - self.value(it, ix, lo)) / (self.y[hi] - self.y[lo])
    }

    fn bracket(nodes: &[f64], v: f64) -> (usize, f64) {
        if v <= nodes[0] {
            return (0, 0.0);
        }
        if v >= nodes[nodes.len() - 1] {
            return (nodes.len() - 2, 1.0);
        }
        let mut i = nodes.partition_point(|&n| n <= v) - 1;
        i = i.min(nodes.len() - 2);
        (i, (v - nodes[i]) / (nodes[i + 1] - nodes[i]))
    }

    /// Trilinear interpolation, clamped to the lattice box.
    pub fn value_at(&self, t: f64, x: f64, y: f64) -> f64 {
        let (it, wt) = Self::bracket(&self.t, t);
        let (ix, wx) = Self::bracket(&self.x, x);
        let (iy, wy) = Self::bracket(&self.y, y);
        let mut out = 0.0;
        for (dt, ft) in [(0, 1.0 - wt), (1, wt)] {
            for (dx, fx) in [(0, 1.0 - wx), (1, wx)] {
                for (dy, fy) in [(0, 1.0 - wy), (1, wy)] {
                    out += ft * fx * fy * self.value(it + dt, ix + dx, iy + dy);
                }
            }
        }
        out
    }

    /// Interpolated `∂v/∂x`, clamped to the lattice box.
    pub fn delta_at(&self, t: f64, x: f64, y: f64) -> f64 {
        let (it, wt) = Self::bracket(&self.t, t);
        let (ix, wx) = Self::bracket(&self.x, x);
        let (iy, wy) = Self::bracket(&self.y, y);
        let mut out = 0.0;
        for (dt, ft) in [(0, 1.0 - wt), (1, wt)] {
            for (dx, fx) in [(0, 1.0 - wx), (1, wx)] {
                for (dy, fy) in [(0, 1.0 - wy), (1, wy)] {
                    out += ft * fx * fy * self.dv_dx(it + dt, ix + dx, iy + dy);
                }
            }
        }
        out
    }
}

/// Solve a tridiagonal system in place; `diag` must be nonzero after
/// elimination (guaranteed by diagonal dominance of the implicit rows).
fn thomas(sub: &[f64], diag: &mut [f64], sup: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    for i in 1..n {
        let w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) / diag[i];
    }
}

/// Crank-Nicolson/Douglas backward solution of the pricing PDE.
///
/// Boundary conditions: `v_xx = 0` at both `x` edges (payoff linearity)
/// and `v_yy = 0` with one-sided convection at the `y` edges.
pub fn sv_pde_price(
    spec: &SVMarketSpec,
    payoff: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    lattice: &PdeLattice,
) -> Result<PdeSurface> {
    lattice.validate()?;
    let (nx, ny, nt) = (lattice.n_x + 1, lattice.n_y + 1, lattice.n_t + 1);
    let dt = lattice.t_end / lattice.n_t as f64;
    let dx = (lattice.x_max - lattice.x_min) / lattice.n_x as f64;
    let dy = (lattice.y_max - lattice.y_min) / lattice.n_y as f64;
    let x: Vec<f64> = (0..nx).map(|i| lattice.x_min + i as f64 * dx).collect();
    let y: Vec<f64> = (0..ny).map(|i| lattice.y_min + i as f64 * dy).collect();
    let t: Vec<f64> = (0..nt).map(|i| i as f64 * dt).collect();
    let eps = spec.vol_noise;

    // per-node coefficients
    let f_of_y: Vec<f64> = y.iter().map(|&yy| (spec.f.forward)(yy)).collect();
    if f_of_y.iter().any(|&v| !(v > 0.0)) {
        return Err(CoreError::InvalidArgument("f must be positive on the lattice".into()));
    }
    let cx: Vec<Vec<f64>> = x
        .iter()
        .map(|&xx| f_of_y.iter().map(|&ff| 0.5 * xx * xx * ff).collect())
        .collect();

    // explicit-half monotonicity bound; refuse with a suggested n_t
    let max_cx = cx
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |a, &b| a.max(b));
    let mut max_a = 0.0f64;
    for &tt in &t {
        for &yy in &y {
            max_a = max_a.max((spec.vol_drift)(tt, yy).abs());
        }
    }
    let stiffness = 2.0 * max_cx / (dx * dx) + eps * eps / (dy * dy) + max_a / dy;
    if 0.5 * dt * stiffness > 1.0 {
        let n_t = (0.5 * lattice.t_end * stiffness * 1.05).ceil() as usize;
        return Err(CoreError::InvalidGrid(format!(
            "time step too large for the explicit half (0.5·Δt·stiffness = {:.3} > 1); \
             use n_t >= {n_t}",
            0.5 * dt * stiffness
        )));
    }

    let mut v = vec![0.0; nt * nx * ny];
    let at = |it: usize, ix: usize, iy: usize| (it * nx + ix) * ny + iy;
    for ix in 0..nx {
        for iy in 0..ny {
            let h = payoff(x[ix], y[iy]);
            if !h.is_finite() {
                return Err(CoreError::InvalidArgument("non-finite payoff on lattice".into()));
            }
            v[at(nt - 1, ix, iy)] = h;
        }
    }

    // L_x v at (ix, iy): zero at the x edges (v_xx = 0 there)
    let lx = |vv: &[f64], ix: usize, iy: usize| -> f64 {
        if ix == 0 || ix == nx - 1 {
            return 0.0;
        }
        cx[ix][iy] * (vv[ix * ny + iy + 0] * -2.0
            + vv[(ix - 1) * ny + iy]
            + vv[(ix + 1) * ny + iy])
            / (dx * dx)
    };
    // L_y v at (ix, iy) for drift a and time tt
    let ly = |vv: &[f64], ix: usize, iy: usize, a: f64| -> f64 {
        let base = ix * ny;
        let conv = if a >= 0.0 {
            let hi = (iy + 1).min(ny - 1);
            a * (vv[base + hi] - vv[base + iy]) / ((hi - iy).max(1) as f64 * dy)
        } else {
            let lo = iy.saturating_sub(1);
            a * (vv[base + iy] - vv[base + lo]) / ((iy - lo).max(1) as f64 * dy)
        };
        let diff = if iy == 0 || iy == ny - 1 {
            0.0
        } else {
            0.5 * eps * eps * (vv[base + iy + 1] - 2.0 * vv[base + iy] + vv[base + iy - 1])
                / (dy * dy)
        };
        conv + diff
    };

    let mut cur: Vec<f64> = v[at(nt - 1, 0, 0)..at(nt - 1, nx - 1, ny - 1) + 1].to_vec();
    let mut next = vec![0.0; nx * ny];
    for step in (0..lattice.n_t).rev() {
        // Rannacher start: two fully implicit steps at the terminal end
        let theta = if lattice.n_t - 1 - step < 2 { 1.0 } else { 0.5 };
        let tt = t[step];

        let a_of_y: Vec<f64> = y.iter().map(|&yy| (spec.vol_drift)(tt, yy)).collect();

        // predictor: full explicit step
        for ix in 0..nx {
            for iy in 0..ny {
                next[ix * ny + iy] = cur[ix * ny + iy]
                    + dt * (lx(&cur, ix, iy) + ly(&cur, ix, iy, a_of_y[iy]));
            }
        }
        // x-correction: (I - θ Δt L_x) y1 = next - θ Δt L_x cur
        {
            let mut sub = vec![0.0; nx];
            let mut sup = vec![0.0; nx];
            let mut diag = vec![0.0; nx];
            let mut rhs = vec![0.0; nx];
            for iy in 0..ny {
                for ix in 0..nx {
                    let c = if ix == 0 || ix == nx - 1 {
                        0.0
                    } else {
                        theta * dt * cx[ix][iy] / (dx * dx)
                    };
                    sub[ix] = -c;
                    sup[ix] = -c;
                    diag[ix] = 1.0 + 2.0 * c;
                    rhs[ix] = next[ix * ny + iy] - theta * dt * lx(&cur, ix, iy);
                }
                thomas(&sub, &mut diag, &sup, &mut rhs);
                for ix in 0..nx {
                    next[ix * ny + iy] = rhs[ix];
                }
            }
        }
        // y-correction: (I - θ Δt L_y) v = y1 - θ Δt L_y cur
        {
            let mut sub = vec![0.0; ny];
            let mut sup = vec![0.0; ny];
            let mut diag = vec![0.0; ny];
            let mut rhs = vec![0.0; ny];
            for ix in 0..nx {
                for iy in 0..ny {
                    let a = a_of_y[iy];
                    let d = if iy == 0 || iy == ny - 1 {
                        0.0
                    } else {
                        theta * dt * 0.5 * eps * eps / (dy * dy)
                    };
                    let (mut lo, mut di, mut hi) = (-d, 1.0 + 2.0 * d, -d);
                    let cfl = theta * dt * a.abs() / dy;
                    if a >= 0.0 && iy < ny - 1 {
                        hi -= cfl;
                        di += cfl;
                    } else if a < 0.0 && iy > 0 {
                        lo -= cfl;
                        di += cfl;
                    }
                    sub[iy] = lo;
                    sup[iy] = hi;
                    diag[iy] = di;
                    rhs[iy] = next[ix * ny + iy] - theta * dt * ly(&cur, ix, iy, a);
                }
                thomas(&sub, &mut diag, &sup, &mut rhs);
                for iy in 0..ny {
                    next[ix * ny + iy] = rhs[iy];
                }
            }
        }

        let base = at(step, 0, 0);
        v[base..base + nx * ny].copy_from_slice(&next);
        std::mem::swap(&mut cur, &mut next);
        if cur.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::OdeBlowUp { time: tt, value: f64::NAN });
        }
    }

    Ok(PdeSurface { t, x, y, v })
}
