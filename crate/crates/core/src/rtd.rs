//! Repetition time diversity over independent quasi-static Rayleigh fading.
//!
//! With threshold `c = e^R - 1`, the relay has decoded after `m` rounds iff
//! `g_sr · Σ_{i<=m} P^s_i >= c`, and likewise for the destination on
//! `g_sd`. Once the relay has taken over after round `j` the destination
//! combines `g_sd · S_j + g_rd · X`, with `X` the relay power sent since.

use crate::error::{Error, Result};
use crate::events::{factor_terms, FactorTerms, MissModel};
use crate::special::exp_cdf;
use crate::types::{ChannelParams, Coding, EventProbabilities, PowerAllocation, Protocol, ProtocolConfig};

pub type RtdTerms = FactorTerms;

/// `Pr(g_sd·s + g_rd·x < c)` with `g_sd ~ Exp(lambda_sd)`, `g_rd ~ Exp(lambda_rd)`.
///
/// `x = 0` gives the source-only probability `1 - e^{-lambda_sd c/s}`.
pub fn g_function(lambda_sd: f64, lambda_rd: f64, c: f64, s: f64, x: f64) -> f64 {
    let direct = exp_cdf(lambda_sd, c / s);
    if x <= 0.0 || lambda_rd.is_infinite() {
        return direct;
    }
    let a = lambda_sd * c / s;
    let b = lambda_rd * c / x;
    let t = if (1.0 - b / a).abs() < 1e-9 {
        // removable singularity of the generic expression
        a * (-a).exp()
    } else {
        // a (e^{-b} - e^{-a}) / (a - b), written without cancellation
        let d = (a - b).abs();
        a * (-a.min(b)).exp() * (-(-d).exp_m1() / d)
    };
    (direct - t).clamp(0.0, direct)
}

struct RtdModel<'a> {
    ch: &'a ChannelParams,
    pw: &'a PowerAllocation,
    m_max: usize,
    c: f64,
    cum: Vec<f64>,
}

impl<'a> RtdModel<'a> {
    fn new(ch: &'a ChannelParams, cfg: &ProtocolConfig, pw: &'a PowerAllocation) -> Result<Self> {
        check_inputs(ch, cfg, pw)?;
        let cum: Vec<f64> = (0..=cfg.rounds()).map(|m| pw.source_sum(m)).collect();
        if cfg.m_max > 0 || cum[1] <= 0.0 {
            if let Some(m) = (1..=cfg.rounds()).find(|&m| cum[m] <= 0.0) {
                return Err(Error::InvalidPower(format!(
                    "cumulative source power through round {m} is zero"
                )));
            }
        }
        Ok(RtdModel {
            ch,
            pw,
            m_max: cfg.m_max,
            c: cfg.initial_rate().exp_m1(),
            cum,
        })
    }
}

impl MissModel for RtdModel<'_> {
    fn m_max(&self) -> usize {
        self.m_max
    }

    fn relay_miss(&self, m: usize) -> Result<f64> {
        Ok(exp_cdf(self.ch.lambda_sr, self.c / self.cum[m]))
    }

    fn dest_miss(&self, m: usize) -> Result<f64> {
        Ok(exp_cdf(self.ch.lambda_sd, self.c / self.cum[m]))
    }

    fn relayed_miss(&self, j: usize, k: usize) -> Result<f64> {
        let x = self.pw.relay_sum(j + 1, k);
        Ok(g_function(self.ch.lambda_sd, self.ch.lambda_rd, self.c, self.cum[j], x))
    }
}

fn check_inputs(ch: &ChannelParams, cfg: &ProtocolConfig, pw: &PowerAllocation) -> Result<()> {
    ch.validate()?;
    cfg.validate()?;
    pw.validate(cfg.m_max)?;
    if cfg.protocol != Protocol::Rtd || cfg.coding != Coding::FixedLength {
        return Err(Error::config("the RTD engine needs RTD with fixed-length coding"));
    }
    Ok(())
}

/// All intermediate terms for independent quasi-static fading.
pub fn rtd_terms(ch: &ChannelParams, cfg: &ProtocolConfig, pw: &PowerAllocation) -> Result<RtdTerms> {
    factor_terms(&RtdModel::new(ch, cfg, pw)?)
}

pub fn rtd_event_probs(ch: &ChannelParams, cfg: &ProtocolConfig, pw: &PowerAllocation) -> Result<EventProbabilities> {
    Ok(rtd_terms(ch, cfg, pw)?.terms.events())
}

/// `Pr(S_m)` for `m = 1..=M+1`.
pub fn rtd_stop_probs(ch: &ChannelParams, cfg: &ProtocolConfig, pw: &PowerAllocation) -> Result<Vec<f64>> {
    Ok(rtd_event_probs(ch, cfg, pw)?.s)
}

/// `Pr(A_m)` for `m = 1..=M+1`.
pub fn rtd_success_probs(ch: &ChannelParams, cfg: &ProtocolConfig, pw: &PowerAllocation) -> Result<Vec<f64>> {
    Ok(rtd_event_probs(ch, cfg, pw)?.a)
}

/// `Pr(B_{n,m})` as `(n, m, p)` triples.
pub fn rtd_relay_active_probs(
    ch: &ChannelParams,
    cfg: &ProtocolConfig,
    pw: &PowerAllocation,
) -> Result<Vec<(usize, usize, f64)>> {
    Ok(rtd_event_probs(ch, cfg, pw)?.spans().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fig3() -> ChannelParams {
        ChannelParams::new(0.5, 1.0, 0.5)
    }

    #[test]
    fn single_round() {
        let ch = ChannelParams::new(0.5, 1.0, 0.5);
        let cfg = ProtocolConfig::fixed_length(Protocol::Rtd, 0, 2f64.ln());
        let pw = PowerAllocation::uniform(0, 1.0);
        let ev = rtd_event_probs(&ch, &cfg, &pw).unwrap();
        assert_eq!(ev.s, vec![1.0]);
        // decoded iff g_sd >= (e^R - 1)/P = 1
        assert_relative_eq!(ev.a[0], (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(metrics::outage(&ev), 1.0 - (-1.0f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn g_closed_form_against_quadrature() {
        // Pr(s g + x y < c) = ∫ λsd e^{-λsd g} (1 - e^{-λrd (c - s g)/x}) dg over g < c/s
        let (lsd, lrd, c, s, x) = (1.0, 0.5, 1.7, 2.0, 3.0);
        let f = |g: f64| lsd * (-lsd * g).exp() * (1.0 - (-lrd * (c - s * g) / x).exp());
        let oracle = crate::special::quad_adaptive(f, 0.0, c / s, 1e-13).unwrap();
        assert_relative_eq!(g_function(lsd, lrd, c, s, x), oracle, max_relative = 1e-12);
    }

    #[test]
    fn g_continuous_at_singular_point() {
        let (lsd, lrd, c, s) = (1.0, 0.5, 1.2, 3.0);
        let x0 = lrd * s / lsd;
        let at = g_function(lsd, lrd, c, s, x0);
        for f in [1.0 - 1e-6, 1.0 + 1e-6] {
            assert!((g_function(lsd, lrd, c, s, x0 * f) - at).abs() < 1e-6);
        }
        // straddling the branch switch moves the value by no more than the slope allows
        for f in [1.0 - 2e-9, 1.0 + 2e-9, 1.0 - 5e-10] {
            assert!((g_function(lsd, lrd, c, s, x0 * f) - at).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_first_power_is_rejected() {
        let cfg = ProtocolConfig::fixed_length(Protocol::Rtd, 1, 0.5);
        let pw = PowerAllocation::new(vec![0.0, 1.0], vec![0.0, 1.0]);
        assert!(matches!(
            rtd_event_probs(&fig3(), &cfg, &pw),
            Err(Error::InvalidPower(_))
        ));
    }

    #[test]
    fn useless_relay_link_gives_single_user_stops() {
        let cfg = ProtocolConfig::fixed_length(Protocol::Rtd, 2, 0.5);
        let pw = PowerAllocation::new(vec![1.0, 2.0, 3.0], vec![0.0, 1.0, 1.0]);
        let ev = rtd_event_probs(&ChannelParams::new(f64::INFINITY, 1.0, 0.5), &cfg, &pw).unwrap();
        let c = 0.5f64.exp_m1();
        let fd = |m: usize| 1.0 - (-c / pw.source_sum(m)).exp();
        assert_relative_eq!(ev.s[0], 1.0 - fd(1), max_relative = 1e-14);
        assert_relative_eq!(ev.s[1], fd(1) - fd(2), max_relative = 1e-12);
        assert_relative_eq!(ev.s[2], fd(2), max_relative = 1e-14);
        assert!(ev.spans().all(|(_, _, p)| p == 0.0));
    }

    #[test]
    fn silent_relay_gives_source_only_harq() {
        let cfg = ProtocolConfig::fixed_length(Protocol::Rtd, 2, 0.5);
        let pw = PowerAllocation::new(vec![1.0, 2.0, 3.0], vec![0.0; 3]);
        let t = rtd_terms(&fig3(), &cfg, &pw).unwrap();
        for row in &t.terms.eps {
            assert!(row.iter().all(|&e| e == 0.0));
        }
    }

    #[test]
    fn m1_relay_span_is_omega_rho() {
        let cfg = ProtocolConfig::fixed_length(Protocol::Rtd, 1, 0.5);
        let pw = PowerAllocation::uniform(1, 10.0);
        let t = rtd_terms(&fig3(), &cfg, &pw).unwrap();
        let ev = t.terms.events();
        assert_eq!(ev.spans().count(), 1);
        assert_eq!(ev.b(1, 2), t.omega[0] * t.rho[0]);
    }

    #[test]
    fn strong_relay_destination_link_shortens_relay_spans() {
        // a very weak relay-destination link keeps the relay transmitting to the end
        let cfg = ProtocolConfig::fixed_length(Protocol::Rtd, 3, 0.5);
        let pw = PowerAllocation::uniform(3, 2.0);
        let weak = rtd_event_probs(&ChannelParams::new(0.5, 1.0, 1e9), &cfg, &pw).unwrap();
        for (_, m, p) in weak.spans() {
            if m <= 3 {
                assert!(p < 1e-8);
            }
        }
    }

    prop_compose! {
        fn instance()(m_max in 0usize..4)
            (lsr in 0.05f64..5.0, lsd in 0.05f64..5.0, lrd in 0.05f64..5.0,
             r in 0.05f64..3.0,
             ps in prop::collection::vec(0.01f64..50.0, m_max + 1),
             pr in prop::collection::vec(0.0f64..50.0, m_max + 1))
            -> (ChannelParams, ProtocolConfig, PowerAllocation)
        {
            let mut pr = pr;
            pr[0] = 0.0;
            (ChannelParams::new(lsr, lsd, lrd),
             ProtocolConfig::fixed_length(Protocol::Rtd, ps.len() - 1, r),
             PowerAllocation::new(ps, pr))
        }
    }

    proptest! {
        #[test]
        fn terms_are_probabilities((ch, cfg, pw) in instance()) {
            let t = rtd_terms(&ch, &cfg, &pw).unwrap();
            let all = t.terms.alpha.iter().chain(&t.terms.beta).chain(&t.omega).chain(&t.rho)
                .chain(&t.terms.vartheta).chain(t.theta.iter().flatten()).chain(t.terms.eps.iter().flatten());
            for &x in all {
                prop_assert!((0.0..=1.0).contains(&x));
            }
            for m in 0..cfg.m_max {
                prop_assert!(t.terms.alpha[m] + t.terms.beta[m] <= 1.0 + 1e-15);
            }
            let ev = t.terms.events();
            prop_assert!((ev.sum_s() - 1.0).abs() < 1e-9);
            ev.validate(1e-9).unwrap();
        }

        #[test]
        fn outage_monotone_in_common_scale((ch, cfg, pw) in instance(), k in 1.0f64..10.0) {
            let lo = metrics::outage(&rtd_event_probs(&ch, &cfg, &pw).unwrap());
            let hi = metrics::outage(&rtd_event_probs(&ch, &cfg, &pw.scaled(k)).unwrap());
            prop_assert!(hi <= lo + 1e-12);
        }
    }
}
