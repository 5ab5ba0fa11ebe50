use super::bessel::{bessel_i0e, bessel_ratios};
use super::quad::{integrate, QuadOptions};

/// First-order Marcum Q function `Q1(a, b) = ∫_b^∞ t e^{-(t²+a²)/2} I0(at) dt`.
///
/// Neumann series with Bessel ratios for `ab <= 30`, quadrature of the defining
/// integral otherwise.
pub fn marcum_q(a: f64, b: f64) -> f64 {
    assert!(a >= 0.0 && b >= 0.0, "marcum_q needs non-negative arguments");
    if b == 0.0 || a.is_infinite() {
        return 1.0;
    }
    if b.is_infinite() {
        return 0.0;
    }
    if a == 0.0 {
        return (-0.5 * b * b).exp();
    }
    let x = a * b;
    let q = if x <= 30.0 { series(a, b) } else { by_quadrature(a, b) };
    q.clamp(0.0, 1.0)
}

fn series(a: f64, b: f64) -> f64 {
    let x = a * b;
    let d = a - b;
    let pre = (-0.5 * d * d).exp() * bessel_i0e(x);
    if a == b {
        return 0.5 * (1.0 + bessel_i0e(x));
    }
    let (rho, lower) = if a < b { (a / b, true) } else { (b / a, false) };
    let mut n = 64 + (4.0 * x) as usize;
    loop {
        let r = bessel_ratios(x, n);
        let mut sum = 0.0;
        let mut pw = 1.0;
        let mut converged = false;
        for (k, &rk) in r.iter().enumerate() {
            let term = pw * rk;
            if k > 0 || lower {
                sum += term;
            }
            if k > 0 && term <= 1e-17 * sum.max(1e-300) {
                converged = true;
                break;
            }
            pw *= rho;
        }
        if converged || n > 20_000 {
            return if lower { pre * sum } else { 1.0 - pre * sum };
        }
        n *= 2;
    }
}

fn by_quadrature(a: f64, b: f64) -> f64 {
    let f = |t: f64| {
        let d = t - a;
        t * (-0.5 * d * d).exp() * bessel_i0e(a * t)
    };
    let opts = QuadOptions {
        rel_tol: 1e-12,
        abs_tol: 1e-300,
        ..QuadOptions::default()
    };
    if b < a {
        // complement over [0, b]; split at the peak so the integrand is resolved
        let head = integrate(f, 0.0, b, &opts)
            .map(|q| q.value)
            .unwrap_or_else(|e| best(&e));
        1.0 - head
    } else {
        integrate(f, b, f64::INFINITY, &opts)
            .map(|q| q.value)
            .unwrap_or_else(|e| best(&e))
    }
}

fn best(e: &crate::error::Error) -> f64 {
    match e {
        crate::error::Error::Numerical { estimate, .. } => *estimate,
        _ => f64::NAN,
    }
}
