/// Modified Bessel function of the first kind, order zero.
///
/// Overflows to `inf` past `x ≈ 713`; use [`bessel_i0e`] there.
pub fn bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 30.0 {
        series_i0(x)
    } else if x <= 700.0 {
        asymptotic_i0e(x) * x.exp()
    } else {
        // split the exponential so the product stays finite as long as I0 does
        let h = (0.5 * x).exp();
        asymptotic_i0e(x) * h * h
    }
}

/// Exponentially scaled `e^{-x} I0(x)`.
pub fn bessel_i0e(x: f64) -> f64 {
    let x = x.abs();
    if x <= 30.0 {
        series_i0(x) * (-x).exp()
    } else {
        asymptotic_i0e(x)
    }
}

// All terms are positive, so the sum keeps full relative precision.
fn series_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term <= sum * 1e-17 {
            return sum;
        }
        k += 1.0;
    }
}

fn asymptotic_i0e(x: f64) -> f64 {
    // e^{-x} I0(x) ~ (2πx)^{-1/2} Σ ((2k-1)!!)^2 / (k! (8x)^k)
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while k < 60.0 {
        let odd = 2.0 * k - 1.0;
        let next = term * odd * odd / (k * 8.0 * x);
        if next >= term {
            break;
        }
        term = next;
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// Ratios `I_k(x)/I_0(x)` for `k = 0..=n` by Miller's backward recurrence.
pub fn bessel_ratios(x: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    out[0] = 1.0;
    if x == 0.0 || n == 0 {
        return out;
    }
    let x = x.abs();
    let start = n + 40 + (40.0 * (n as f64 + x)).sqrt() as usize;
    let mut next = 0.0; // I_{k+1}
    let mut cur = 1e-300; // I_k
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / x * cur + next;
        next = cur;
        cur = prev;
        if k - 1 <= n {
            out[k - 1] = cur;
        }
        if cur > 1e250 {
            next *= 1e-250;
            cur *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let i0 = out[0];
    for v in out.iter_mut() {
        *v /= i0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Reference: plain power series evaluated with compensated summation in
    // extended steps, independent of the split used above.
    fn series_oracle(x: f64) -> f64 {
        let mut sum = 0.0f64;
        let mut c = 0.0f64;
        let mut term = 1.0f64;
        for k in 0..2000 {
            if k > 0 {
                term *= (x / 2.0) * (x / 2.0) / (k as f64 * k as f64);
            }
            let y = term - c;
            let t = sum + y;
            c = (t - sum) - y;
            sum = t;
            if term < 1e-20 * sum && k as f64 > x {
                break;
            }
        }
        sum
    }

    #[test]
    fn known_values() {
        assert_eq!(bessel_i0(0.0), 1.0);
        assert_relative_eq!(bessel_i0(1.0), 1.266_065_877_752_008_4, max_relative = 1e-14);
        assert_relative_eq!(bessel_i0(10.0), 2_815.716_628_466_254, max_relative = 1e-13);
    }

    #[test]
    fn matches_series_across_switch() {
        for &x in &[0.3, 5.0, 29.9, 30.0, 30.1, 45.0, 80.0, 200.0, 600.0] {
            assert_relative_eq!(bessel_i0(x), series_oracle(x), max_relative = 1e-12);
        }
    }

    #[test]
    fn scaled_form_is_finite_past_overflow() {
        let v = bessel_i0e(1e4);
        assert_relative_eq!(v, 1.0 / (2.0 * std::f64::consts::PI * 1e4).sqrt(), max_relative = 2e-5);
        assert!(bessel_i0(720.0).is_infinite() || bessel_i0(720.0) > 1e300);
    }

    #[test]
    fn symmetric() {
        assert_eq!(bessel_i0(-3.2), bessel_i0(3.2));
    }

    #[test]
    fn ratios_by_series() {
        // I_k(x) = Σ (x/2)^{2j+k} / (j! (j+k)!)
        fn ik(k: usize, x: f64) -> f64 {
            let mut term = (x / 2.0).powi(k as i32) / (1..=k).map(|i| i as f64).product::<f64>();
            let mut sum = term;
            for j in 1..400 {
                term *= (x / 2.0) * (x / 2.0) / (j as f64 * (j + k) as f64);
                sum += term;
            }
            sum
        }
        for &x in &[0.5, 3.0, 12.0, 30.0] {
            let r = bessel_ratios(x, 10);
            for (k, &rk) in r.iter().enumerate() {
                assert_relative_eq!(rk, ik(k, x) / ik(0, x), max_relative = 1e-12);
            }
        }
    }
}
