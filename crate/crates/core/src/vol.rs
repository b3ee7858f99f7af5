//! Latent-volatility reconstruction from realized quadratic variation.
//!
//! From an observed yield path `R` the cumulative sums of squared
//! increments estimate `∫σ²ds`; a windowed difference quotient recovers
//! `σ²_t` and the inverse link `f⁻¹` maps it back to the volatility
//! state path.

use crate::error::{CoreError, Result};
use crate::grid::{SamplePath, TimeGrid};

/// Cumulative realized quadratic variation with a smoothing window for
/// its numerical derivative.
#[derive(Debug, Clone)]
pub struct QVEstimate {
    pub grid: TimeGrid,
    pub cumulative: Vec<f64>,
    pub window: usize,
}

/// Cumulative sums of squared increments of a scalar yield path.
///
/// The derivative window defaults to `ceil(sqrt(n))`.
pub fn realized_qv(r: &SamplePath) -> Result<QVEstimate> {
    if r.dim() != 1 {
        return Err(CoreError::InvalidPath(format!(
            "realized_qv needs a scalar path, got d = {}",
            r.dim()
        )));
    }
    let v = r.scalar_values();
    let mut cumulative = Vec::with_capacity(v.len());
    cumulative.push(0.0);
    let mut acc = 0.0;
    for j in 1..v.len() {
        let d = v[j] - v[j - 1];
        acc += d * d;
        cumulative.push(acc);
    }
    let window = (r.grid().n_steps() as f64).sqrt().ceil() as usize;
    Ok(QVEstimate {
        grid: r.grid().clone(),
        cumulative,
        window: window.max(1),
    })
}

/// Recover the volatility state path `y = f⁻¹(σ²)` from a QV estimate.
///
/// The local slope is a centered difference quotient over `window` grid
/// steps (one-sided at the endpoints). Slopes at or below `floor` are
/// clamped to it when a floor is given; otherwise a nonpositive slope is
/// an error naming the node.
pub fn vol_path_from_qv(
    qv: &QVEstimate,
    f_inverse: &dyn Fn(f64) -> f64,
    floor: Option<f64>,
) -> Result<SamplePath> {
    if qv.window == 0 {
        return Err(CoreError::InvalidArgument("window must be >= 1".into()));
    }
    let nodes = qv.grid.nodes();
    let n = nodes.len();
    if qv.cumulative.len() != n {
        return Err(CoreError::InvalidPath("cumulative length mismatch".into()));
    }
    let w = qv.window;
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let lo = j.saturating_sub(w);
        let hi = (j + w).min(n - 1);
        let ds = nodes[hi] - nodes[lo];
        let mut slope = (qv.cumulative[hi] - qv.cumulative[lo]) / ds;
        if slope <= 0.0 {
            match floor {
                Some(f) => slope = f,
                None => return Err(CoreError::NonPositiveSlope { node: j, s: nodes[j] }),
            }
        } else if let Some(f) = floor {
            slope = slope.max(f);
        }
        let y = f_inverse(slope);
        if !y.is_finite() {
            return Err(CoreError::NonPositiveSlope { node: j, s: nodes[j] });
        }
        out.push(y);
    }
    SamplePath::scalar(qv.grid.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::wiener_increments;
    use crate::seed::SeedSpec;

    #[test]
    fn zero_path_gives_zero_qv() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let r = SamplePath::scalar(g, vec![0.0; 11]).unwrap();
        let qv = realized_qv(&r).unwrap();
        assert!(qv.cumulative.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pure_drift_qv_vanishes_with_n() {
        // R = μ·s: S_n(1) = μ²/n.
        let mu = 2.0;
        for n in [100usize, 1000] {
            let g = TimeGrid::uniform(1.0, n).unwrap();
            let vals: Vec<f64> = g.nodes().iter().map(|&s| mu * s).collect();
            let r = SamplePath::scalar(g, vals).unwrap();
            let qv = realized_qv(&r).unwrap();
            let terminal = *qv.cumulative.last().unwrap();
            assert!((terminal - mu * mu / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn vector_path_rejected() {
        let g = TimeGrid::uniform(1.0, 2).unwrap();
        let r = SamplePath::new(g, 2, vec![0.0; 6]).unwrap();
        assert!(realized_qv(&r).is_err());
    }

    #[test]
    fn qv_of_scaled_brownian_converges() {
        let sigma = 0.3;
        let n = 10_000;
        let g = TimeGrid::uniform(1.0, n).unwrap();
        let seed = SeedSpec::new(31);
        let mut total = 0.0;
        let reps = 20;
        for k in 0..reps {
            let dw = wiener_increments(&g, &seed, k, 0);
            let mut vals = vec![0.0];
            for &d in &dw {
                vals.push(vals.last().unwrap() + sigma * d);
            }
            let r = SamplePath::scalar(g.clone(), vals).unwrap();
            total += *realized_qv(&r).unwrap().cumulative.last().unwrap();
        }
        let mean = total / reps as f64;
        assert!((mean - 0.09).abs() / 0.09 < 0.05, "mean {mean}");
    }

    #[test]
    fn exact_affine_cumulative_inverts_exactly() {
        // F(s) = σ² s with f = exp: y ≡ ln σ².
        let sigma2 = 0.04;
        let g = TimeGrid::uniform(1.0, 100).unwrap();
        let cumulative: Vec<f64> = g.nodes().iter().map(|&s| sigma2 * s).collect();
        let qv = QVEstimate { grid: g, cumulative, window: 3 };
        let y = vol_path_from_qv(&qv, &f64::ln, None).unwrap();
        for &v in y.scalar_values() {
            assert!((v - sigma2.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_sigma_exp_link_recovers_zero() {
        // σ² ≡ 1 = e⁰ ⇒ y ≡ 0.
        let g = TimeGrid::uniform(1.0, 50).unwrap();
        let cumulative: Vec<f64> = g.nodes().to_vec();
        let qv = QVEstimate { grid: g, cumulative, window: 1 };
        let y = vol_path_from_qv(&qv, &f64::ln, None).unwrap();
        assert!(y.scalar_values().iter().all(|&v| v.abs() < 1e-13));
    }

    #[test]
    fn nonpositive_slope_names_node() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let qv = QVEstimate {
            grid: g,
            cumulative: vec![0.0, 0.1, 0.1, 0.1, 0.1],
            window: 1,
        };
        match vol_path_from_qv(&qv, &f64::ln, None) {
            Err(CoreError::NonPositiveSlope { node, .. }) => assert!(node >= 2),
            other => panic!("expected slope error, got {other:?}"),
        }
        // with a floor the same input succeeds
        assert!(vol_path_from_qv(&qv, &f64::ln, Some(1e-8)).is_ok());
    }
}
