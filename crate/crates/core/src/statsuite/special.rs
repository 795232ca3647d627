//! Special functions, backed by statrs.

use statrs::function::{erf, gamma};

/// Regularized upper incomplete gamma Q(a, x).
pub fn igamc(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma::checked_gamma_ur(a, x).unwrap_or(0.0).clamp(0.0, 1.0)
}

pub fn erfc(x: f64) -> f64 {
    erf::erfc(x)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}
