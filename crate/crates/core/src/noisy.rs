//! RTD with one retransmission round and erroneous ACK/NACK bits.
//!
//! Notation for the closed forms: `beta1` and `omega1` are the probabilities
//! that the destination and the relay decode the first round; `mu`, `sigma`
//! and `kappa` are the destination outage probabilities when round 2 is sent
//! by the relay, by the source, and by both at once.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rtd::g_function;
use crate::special::{exp_cdf, integrate, marcum_q, QuadOptions};
use crate::types::{ChannelParams, FadingMode, FeedbackNoise, Metrics, PowerAllocation};

/// Value of `kappa`; `monte_carlo` is set when quadrature failed and the value
/// is a sample mean with standard error `std_error`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaEstimate {
    pub value: f64,
    pub std_error: f64,
    pub monte_carlo: bool,
}

const KAPPA_MC_DRAWS: usize = 1_000_000;
const KAPPA_MC_SEED: u64 = 0x006b_6170_7061;

fn check(ch: &ChannelParams, pw: &PowerAllocation, r: f64) -> Result<()> {
    ch.validate()?;
    pw.validate(1)?;
    if ch.fading != FadingMode::QuasiStatic || ch.delta != 0.0 {
        return Err(Error::config(
            "noisy feedback is modelled for independent quasi-static links",
        ));
    }
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::invalid(format!("rate must be positive, got {r}")));
    }
    if pw.source[0] <= 0.0 {
        return Err(Error::InvalidPower("first-round source power is zero".into()));
    }
    Ok(())
}

/// `Pr(g_sd P^s_1 + |H_sd sqrt(P^s_2) + H_rd sqrt(P^r_2)|^2 < e^r - 1)`.
///
/// Conditioned on `g_sd = x` the combined gain is noncentral exponential,
/// which leaves a single Marcum-Q integral over `x`.
pub fn kappa_term(ch: &ChannelParams, pw: &PowerAllocation, r: f64) -> Result<KappaEstimate> {
    check(ch, pw, r)?;
    let c = r.exp_m1();
    let (p1, p2, pr) = (pw.source[0], pw.source[1], pw.relay[1]);
    if pr == 0.0 || ch.lambda_rd.is_infinite() {
        return Ok(KappaEstimate {
            value: exp_cdf(ch.lambda_sd, c / (p1 + p2)),
            std_error: 0.0,
            monte_carlo: false,
        });
    }
    let (lsd, lrd) = (ch.lambda_sd, ch.lambda_rd);
    let f = |x: f64| {
        let a = (2.0 * lrd * p2 * x / pr).sqrt();
        let b = (2.0 * lrd * (c - p1 * x).max(0.0) / pr).sqrt();
        lsd * (-lsd * x).exp() * (1.0 - marcum_q(a, b))
    };
    let opts = QuadOptions {
        rel_tol: 1e-10,
        abs_tol: 1e-15,
        max_subdivisions: 2000,
    };
    match integrate(f, 0.0, c / p1, &opts) {
        Ok(q) => Ok(KappaEstimate {
            value: q.value.clamp(0.0, 1.0),
            std_error: 0.0,
            monte_carlo: false,
        }),
        Err(Error::Numerical { .. }) => Ok(kappa_monte_carlo(ch, pw, c)),
        Err(e) => Err(e),
    }
}

fn kappa_monte_carlo(ch: &ChannelParams, pw: &PowerAllocation, c: f64) -> KappaEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(KAPPA_MC_SEED);
    let mut gauss = |lambda: f64| -> (f64, f64) {
        // CN(0, 1/lambda) by Box-Muller
        let u: f64 = 1.0 - rng.random::<f64>();
        let phase = std::f64::consts::TAU * rng.random::<f64>();
        let rad = (-u.ln() / lambda).sqrt();
        (rad * phase.cos(), rad * phase.sin())
    };
    let (p1, p2, pr) = (pw.source[0], pw.source[1], pw.relay[1]);
    let mut hits = 0usize;
    for _ in 0..KAPPA_MC_DRAWS {
        let (sr, si) = gauss(ch.lambda_sd);
        let (rr, ri) = gauss(ch.lambda_rd);
        let g = sr * sr + si * si;
        let zr = sr * p2.sqrt() + rr * pr.sqrt();
        let zi = si * p2.sqrt() + ri * pr.sqrt();
        if g * p1 + zr * zr + zi * zi < c {
            hits += 1;
        }
    }
    let n = KAPPA_MC_DRAWS as f64;
    let p = hits as f64 / n;
    KappaEstimate {
        value: p,
        std_error: (p * (1.0 - p) / n).sqrt(),
        monte_carlo: true,
    }
}

/// Probability that round 2 is sent by the source (`.0`) and by the relay
/// (`.1`), plus the expected slot count `.2`.
fn activity(beta1: f64, omega1: f64, fb: &FeedbackNoise) -> (f64, f64, f64) {
    let (psd, prd, psr) = (fb.p_sd, fb.p_rd, fb.p_sr);
    // both transmitters believe the destination asked for a retransmission
    let both_nack = (1.0 - beta1) * (1.0 - prd) * (1.0 - psd) + beta1 * prd * psd;
    let src_flip = psd * (1.0 - prd);
    let rel_flip = prd * (1.0 - psd);
    let source =
        ((omega1 * psr) + (1.0 - omega1) * (1.0 - psr)) * both_nack + src_flip * beta1 + rel_flip * (1.0 - beta1);
    let relay = omega1 * both_nack + src_flip * omega1 * (1.0 - beta1) + rel_flip * omega1 * beta1;
    let slots = 1.0
        + (1.0 - (1.0 - omega1) * psr) * both_nack
        + src_flip * (beta1 + (1.0 - beta1) * omega1)
        + rel_flip * (1.0 - beta1 + omega1 * beta1);
    (source, relay, slots)
}

/// Metrics of relay RTD with `M = 1` under noisy feedback.
pub fn noisy_rtd_m1_metrics(ch: &ChannelParams, pw: &PowerAllocation, r: f64, fb: &FeedbackNoise) -> Result<Metrics> {
    check(ch, pw, r)?;
    fb.validate()?;
    let c = r.exp_m1();
    let (p1, p2, pr) = (pw.source[0], pw.source[1], pw.relay[1]);
    let beta1 = 1.0 - exp_cdf(ch.lambda_sd, c / p1);
    let omega1 = 1.0 - exp_cdf(ch.lambda_sr, c / p1);
    let mu = g_function(ch.lambda_sd, ch.lambda_rd, c, p1, pr);
    let sigma = exp_cdf(ch.lambda_sd, c / (p1 + p2));
    let kappa = if fb.p_sr > 0.0 {
        kappa_term(ch, pw, r)?.value
    } else {
        0.0
    };
    let (psd, prd, psr) = (fb.p_sd, fb.p_rd, fb.p_sr);

    let outage = (1.0 - beta1) * prd * psd
        + psd * (1.0 - prd) * omega1 * mu
        + psd * (1.0 - prd) * (1.0 - omega1) * (1.0 - beta1)
        + (1.0 - psd) * prd * sigma
        + (1.0 - prd)
            * (1.0 - psd)
            * (omega1 * (1.0 - psr) * mu
                + omega1 * psr * kappa
                + (1.0 - omega1) * (1.0 - psr) * sigma
                + (1.0 - beta1) * (1.0 - omega1) * psr);
    let outage = outage.clamp(0.0, 1.0);

    let (source_on, relay_on, slots) = activity(beta1, omega1, fb);
    let energy = p1 + p2 * source_on + pr * relay_on;
    let relay_active = relay_on > f64::MIN_POSITIVE && pr > 0.0;
    Ok(Metrics {
        // slots are in units of one round, i.e. 1/r channel uses per nat
        throughput: r * (1.0 - outage) / slots,
        outage,
        phi_s: (p1 + p2 * source_on) / (1.0 + source_on),
        phi_r: if relay_active { pr } else { 0.0 },
        phi_total: energy / slots,
        relay_active,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;
    use crate::rtd::rtd_event_probs;
    use crate::types::{Protocol, ProtocolConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fig11() -> ChannelParams {
        ChannelParams::new(0.5, 1.0, 0.5)
    }

    #[test]
    fn noiseless_reduces_to_rtd() {
        let pw = PowerAllocation::new(vec![6.0, 9.0], vec![0.0, 11.0]);
        let cfg = ProtocolConfig::fixed_length(Protocol::Rtd, 1, 0.5);
        let ev = rtd_event_probs(&fig11(), &cfg, &pw).unwrap();
        let m = metrics::assemble(&ev, &cfg, &pw).unwrap();
        let n = noisy_rtd_m1_metrics(&fig11(), &pw, 0.5, &FeedbackNoise::noiseless()).unwrap();
        assert_relative_eq!(n.outage, m.outage, max_relative = 1e-12);
        assert_relative_eq!(n.phi_total, m.phi_total, max_relative = 1e-12);
        assert_relative_eq!(n.phi_s, m.phi_s, max_relative = 1e-12);
        assert_relative_eq!(n.throughput, m.throughput, max_relative = 1e-12);
        assert_eq!(n.relay_active, m.relay_active);
    }

    #[test]
    fn kappa_collapses() {
        let ch = fig11();
        let c = 0.5f64.exp_m1();
        // no relay power: coherent sum over the same source channel
        let k = kappa_term(&ch, &PowerAllocation::new(vec![2.0, 3.0], vec![0.0, 0.0]), 0.5).unwrap();
        assert_relative_eq!(k.value, 1.0 - (-c / 5.0f64).exp(), max_relative = 1e-14);
        // no second source round: the relay alone, as in mu
        let pw = PowerAllocation::new(vec![2.0, 0.0], vec![0.0, 3.0]);
        let k = kappa_term(&ch, &pw, 0.5).unwrap();
        assert!(!k.monte_carlo);
        assert!((k.value - g_function(1.0, 0.5, c, 2.0, 3.0)).abs() < 1e-10);
    }

    #[test]
    fn kappa_agrees_with_sampling() {
        let ch = fig11();
        let pw = PowerAllocation::new(vec![1.5, 2.0], vec![0.0, 2.5]);
        let k = kappa_term(&ch, &pw, 1.0).unwrap();
        let mc = kappa_monte_carlo(&ch, &pw, 1f64.exp_m1());
        assert!(
            (k.value - mc.value).abs() < 3.0 * mc.std_error,
            "{} vs {} ± {}",
            k.value,
            mc.value,
            mc.std_error
        );
    }

    #[test]
    fn always_flipped_feedback_stays_a_probability() {
        let pw = PowerAllocation::uniform(1, 10.0);
        for fb in [
            FeedbackNoise {
                p_sd: 1.0,
                p_rd: 0.0,
                p_sr: 0.0,
            },
            FeedbackNoise {
                p_sd: 1.0,
                p_rd: 1.0,
                p_sr: 1.0,
            },
            FeedbackNoise {
                p_sd: 0.3,
                p_rd: 0.7,
                p_sr: 1.0,
            },
        ] {
            let m = noisy_rtd_m1_metrics(&fig11(), &pw, 0.5, &fb).unwrap();
            assert!((0.0..=1.0).contains(&m.outage));
            assert!(m.phi_total > 0.0 && m.phi_total.is_finite());
        }
    }

    #[test]
    fn rejects_bad_probabilities() {
        let pw = PowerAllocation::uniform(1, 10.0);
        let fb = FeedbackNoise {
            p_sd: 1.2,
            p_rd: 0.0,
            p_sr: 0.0,
        };
        assert!(matches!(
            noisy_rtd_m1_metrics(&fig11(), &pw, 0.5, &fb),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn practical_error_rates_barely_matter() {
        let pw = PowerAllocation::uniform(1, 10.0);
        let base = noisy_rtd_m1_metrics(&fig11(), &pw, 0.5, &FeedbackNoise::noiseless())
            .unwrap()
            .outage;
        for p in [1e-5, 1e-4, 1e-3] {
            let fb = FeedbackNoise {
                p_sd: p,
                p_rd: p,
                p_sr: p,
            };
            let o = noisy_rtd_m1_metrics(&fig11(), &pw, 0.5, &fb).unwrap().outage;
            assert!(((o - base) / base).abs() < 0.05, "p={p}: {o} vs {base}");
        }
    }

    proptest! {
        #[test]
        fn continuous_in_error_rates(p1 in 0.5f64..20.0, p2 in 0.5f64..20.0, pr in 0.0f64..20.0, r in 0.2f64..1.5) {
            let pw = PowerAllocation::new(vec![p1, p2], vec![0.0, pr]);
            let base = noisy_rtd_m1_metrics(&fig11(), &pw, r, &FeedbackNoise::noiseless()).unwrap();
            let mut prev = f64::INFINITY;
            for p in [1e-2, 1e-4, 1e-6, 1e-8] {
                let fb = FeedbackNoise { p_sd: p, p_rd: p, p_sr: p };
                let m = noisy_rtd_m1_metrics(&fig11(), &pw, r, &fb).unwrap();
                let d = (m.outage - base.outage).abs();
                prop_assert!(d <= prev + 1e-15);
                prev = d;
            }
            prop_assert!(prev < 1e-7);
        }
    }
}
