use crate::error::{Error, Result};

/// Solve `f(x) = target` for increasing `f` with `f(0) = 0`.
///
/// The bracket `[0, hint]` is doubled until it contains the root (at most 200
/// times), then refined by Brent's method until
/// `|f(x) - target| <= 1e-12·max(1, |target|)` or the bracket cannot shrink.
pub fn root_increasing<F: Fn(f64) -> f64>(f: F, target: f64, bracket_hint: f64) -> Result<f64> {
    if target.is_nan() {
        return Err(Error::NoRoot("target is NaN".into()));
    }
    if target <= 0.0 {
        return Ok(0.0);
    }
    let ftol = 1e-12 * target.abs().max(1.0);
    let mut lo = 0.0;
    let mut flo = -target;
    let mut hi = if bracket_hint.is_finite() && bracket_hint > 0.0 {
        bracket_hint
    } else {
        1.0
    };
    let mut fhi = f(hi) - target;
    let mut doublings = 0;
    while fhi < 0.0 || fhi.is_nan() {
        if doublings == 200 || fhi.is_nan() {
            return Err(Error::NoRoot(format!(
                "no bracket for target {target} below x = {hi:e}"
            )));
        }
        lo = hi;
        flo = fhi;
        hi *= 2.0;
        fhi = f(hi) - target;
        doublings += 1;
    }
    if fhi.abs() <= ftol {
        return Ok(hi);
    }
    Ok(brent(&f, target, lo, hi, flo, fhi, ftol))
}

fn brent<F: Fn(f64) -> f64>(f: &F, target: f64, a0: f64, b0: f64, fa0: f64, fb0: f64, ftol: f64) -> f64 {
    let (mut a, mut b, mut fa, mut fb) = (a0, b0, fa0, fb0);
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..300 {
        if fb.signum() == fc.signum() && fb != 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + f64::MIN_POSITIVE;
        let m = 0.5 * (c - b);
        if fb.abs() <= ftol || m.abs() <= tol {
            return b;
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b) - target;
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_and_log() {
        assert_relative_eq!(root_increasing(|x| x, 3.0, 1.0).unwrap(), 3.0, max_relative = 1e-12);
        let r = 0.7;
        let x = root_increasing(|x: f64| x.ln_1p(), r, 1.0).unwrap();
        assert_relative_eq!(x, r.exp_m1(), max_relative = 1e-11);
    }

    #[test]
    fn mixed_log_residual() {
        let f = |x: f64| 0.5 * (2.0 * x).ln_1p() + 0.5 * x.ln_1p();
        let x = root_increasing(f, 1.0, 1.0).unwrap();
        assert!((f(x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bounded_function_has_no_root() {
        let f = |x: f64| x / (1.0 + x);
        assert!(matches!(root_increasing(f, 2.0, 1.0), Err(Error::NoRoot(_))));
    }

    #[test]
    fn zero_target() {
        assert_eq!(root_increasing(|x| x, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn tiny_bracket_hint() {
        let x = root_increasing(|x| x * x, 1e6, 1e-9).unwrap();
        assert_relative_eq!(x, 1e3, max_relative = 1e-12);
    }
}
