//! Huber clipping in norm and by interval.

use crate::error::{CoreError, Result};

/// `h_c(z) = z · min(1, c/|z|)`; the output norm never exceeds `c`.
pub fn huber_clip(z: &[f64], c: f64) -> Result<Vec<f64>> {
    let mut out = z.to_vec();
    huber_clip_into(&mut out, c)?;
    Ok(out)
}

pub fn huber_clip_into(z: &mut [f64], c: f64) -> Result<()> {
    if !(c > 0.0) {
        return Err(CoreError::InvalidArgument(format!("clip level must be > 0, got {c}")));
    }
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > c {
        let scale = c / norm;
        for v in z.iter_mut() {
            *v *= scale;
        }
    }
    Ok(())
}

/// `[x]_a^b = (x ∧ b) ∨ a`.
pub fn clip_interval(x: f64, a: f64, b: f64) -> f64 {
    x.min(b).max(a)
}
