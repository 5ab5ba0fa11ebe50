//! Numerical kernels: modified Bessel I0, Marcum Q, adaptive quadrature and
//! bracketed root finding.

mod bessel;
mod marcum;
mod quad;
mod root;

pub use bessel::{bessel_i0, bessel_i0e, bessel_ratios};
pub use marcum::marcum_q;
pub use quad::{integrate, quad_adaptive, QuadOptions, Quadrature};
pub use root::root_increasing;

use crate::error::{Error, Result};

/// Clamp a computed probability to `[0, 1]`, refusing values that are off by
/// more than `1e-8`.
pub fn clamp_probability(p: f64, what: &str) -> Result<f64> {
    if p.is_nan() || !(-1e-8..=1.0 + 1e-8).contains(&p) {
        return Err(Error::Numerical {
            what: format!("{what} outside [0, 1]"),
            estimate: p,
            error_bound: 1e-8,
        });
    }
    Ok(p.clamp(0.0, 1.0))
}

/// `1 - e^{-lambda x}`, with `lambda = inf` or `x = inf` handled as limits and
/// `0 · inf` read as 0 (a link that is absent never lets anything through).
pub fn exp_cdf(lambda: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if lambda.is_infinite() || x.is_infinite() {
        1.0
    } else {
        -(-lambda * x).exp_m1()
    }
}

/// `e^{-lambda x}` with the same conventions as [`exp_cdf`].
pub fn exp_sf(lambda: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if lambda.is_infinite() || x.is_infinite() {
        0.0
    } else {
        (-lambda * x).exp()
    }
}
