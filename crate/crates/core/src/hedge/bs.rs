//! Lognormal (frozen-volatility) pricing formulas used as references
//! for the PDE solver and the zero-drift hedging examples.

use statrs::distribution::{ContinuousCDF, Normal};

fn phi(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// Driftless lognormal call price with total variance `v = σ²(T-t)`.
pub fn call_price(x: f64, strike: f64, total_var: f64) -> f64 {
    if total_var <= 0.0 {
        return (x - strike).max(0.0);
    }
    if x <= 0.0 {
        return 0.0;
    }
    let sv = total_var.sqrt();
    let d1 = ((x / strike).ln() + 0.5 * total_var) / sv;
    x * phi(d1) - strike * phi(d1 - sv)
}

/// Delta of [`call_price`] in `x`.
pub fn call_delta(x: f64, strike: f64, total_var: f64) -> f64 {
    if total_var <= 0.0 {
        return if x > strike { 1.0 } else { 0.0 };
    }
    if x <= 0.0 {
        return 0.0;
    }
    let sv = total_var.sqrt();
    phi(((x / strike).ln() + 0.5 * total_var) / sv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_value() {
        // x = k = 1, σ = 0.2, T = 1: price = 2Φ(0.1) - 1 ≈ 0.0796557.
        let p = call_price(1.0, 1.0, 0.04);
        assert!((p - 0.07965567455405798).abs() < 1e-12, "{p}");
    }

    #[test]
    fn limits_and_monotonicity() {
        assert!((call_price(1.2, 1.0, 0.0) - 0.2).abs() < 1e-15);
        assert_eq!(call_price(0.8, 1.0, 0.0), 0.0);
        // deep in/out of the money
        assert!((call_price(100.0, 1.0, 0.04) - 99.0).abs() < 1e-9);
        assert!(call_price(0.01, 1.0, 0.04) < 1e-12);
        let mut prev = 0.0;
        for i in 1..50 {
            let p = call_price(0.1 * i as f64, 1.0, 0.09);
            assert!(p >= prev);
            prev = p;
        }
    }

    #[test]
    fn delta_is_price_slope() {
        let (x, k, v) = (1.1, 1.0, 0.09);
        let eps = 1e-5;
        let fd = (call_price(x + eps, k, v) - call_price(x - eps, k, v)) / (2.0 * eps);
        assert!((call_delta(x, k, v) - fd).abs() < 1e-8);
    }
}
