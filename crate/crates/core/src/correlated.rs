//! RTD with spatially correlated source-relay and source-destination links.
//!
//! `h_sd = δ h_sr + sqrt(1-δ²) ς` with `h_sr`, `ς` independent and both
//! links sharing the rate `lambda`. Given `g_sr = y`, `2 lambda g_sd / (1-δ²)`
//! is noncentral chi-square with two degrees of freedom, so rectangle
//! probabilities of `(g_sd, g_sr)` reduce to first-order Marcum Q functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventTerms;
use crate::special::{clamp_probability, integrate, marcum_q, QuadOptions};
use crate::types::{ChannelParams, Coding, EventProbabilities, FadingMode, PowerAllocation, Protocol, ProtocolConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelatedChannel {
    /// Shared rate of the source-relay and source-destination gains.
    pub lambda: f64,
    pub lambda_rd: f64,
    pub delta: f64,
}

impl CorrelatedChannel {
    pub fn new(lambda: f64, lambda_rd: f64, delta: f64) -> Self {
        CorrelatedChannel {
            lambda,
            lambda_rd,
            delta,
        }
    }

    /// Requires `lambda_sr == lambda_sd`; the correlation model is defined for
    /// equally distributed source links only.
    pub fn from_params(ch: &ChannelParams) -> Result<Self> {
        ch.validate()?;
        if ch.fading != FadingMode::QuasiStatic {
            return Err(Error::config(
                "correlated links are modelled for quasi-static fading only",
            ));
        }
        let same = ch.lambda_sr == ch.lambda_sd
            || (ch.lambda_sr - ch.lambda_sd).abs() <= 1e-12 * ch.lambda_sd.max(ch.lambda_sr);
        if !same {
            return Err(Error::config(format!(
                "correlated links need lambda_sr == lambda_sd, got {} and {}",
                ch.lambda_sr, ch.lambda_sd
            )));
        }
        let c = CorrelatedChannel::new(ch.lambda_sd, ch.lambda_rd, ch.delta);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be positive and finite, got {}",
                self.lambda
            )));
        }
        if self.lambda_rd.is_nan() || self.lambda_rd <= 0.0 {
            return Err(Error::invalid(format!(
                "lambda_rd must be positive, got {}",
                self.lambda_rd
            )));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::invalid(format!("delta must lie in [0, 1], got {}", self.delta)));
        }
        Ok(())
    }

    /// `Pr(g_sd >= u, g_sr >= w) - e^{-lambda u}`; the offset cancels in rectangles.
    fn joint_tail(&self, u: f64, w: f64) -> f64 {
        let l = self.lambda;
        if u.is_infinite() {
            return 0.0;
        }
        if w.is_infinite() {
            return -(-l * u).exp();
        }
        let q = (1.0 - self.delta * self.delta) / l;
        let au = (2.0 * u / q).sqrt();
        let aw = (2.0 * w / q).sqrt();
        (-l * w).exp() * marcum_q(self.delta * aw, au) - (-l * u).exp() * marcum_q(aw, self.delta * au)
    }
}

/// `Pr(u <= g_sd < v, w <= g_sr < z)`; infinite upper bounds are allowed.
pub fn rect_prob(ch: &CorrelatedChannel, u: f64, v: f64, w: f64, z: f64) -> Result<f64> {
    if [u, v, w, z].iter().any(|x| x.is_nan()) || !(0.0 <= u && u <= v && 0.0 <= w && w <= z) {
        return Err(Error::invalid(format!("bad rectangle [{u}, {v}) x [{w}, {z})")));
    }
    Ok(rect(ch, u, v, w, z))
}

fn rect(ch: &CorrelatedChannel, u: f64, v: f64, w: f64, z: f64) -> f64 {
    if u >= v || w >= z {
        return 0.0;
    }
    let l = ch.lambda;
    if 1.0 - ch.delta * ch.delta <= f64::EPSILON {
        // identical gains: the rectangle is cut down to its diagonal
        let lo = u.max(w);
        let hi = v.min(z);
        return if lo < hi {
            (-l * lo).exp() - (-l * hi).exp()
        } else {
            0.0
        };
    }
    let y = ch.joint_tail(u, w) - ch.joint_tail(v, w) - ch.joint_tail(u, z) + ch.joint_tail(v, z);
    y.clamp(0.0, 1.0)
}

fn quad_opts() -> QuadOptions {
    QuadOptions {
        rel_tol: 1e-10,
        abs_tol: 1e-15,
        max_subdivisions: 2000,
    }
}

struct Setup<'a> {
    ch: &'a CorrelatedChannel,
    pw: &'a PowerAllocation,
    c: f64,
    cum: Vec<f64>,
    /// `thr[m] = c / S_m`, `thr[0] = ∞`.
    thr: Vec<f64>,
}

impl Setup<'_> {
    fn relay_power(&self, j: usize, k: usize) -> f64 {
        if self.ch.lambda_rd.is_infinite() {
            0.0
        } else {
            self.pw.relay_sum(j + 1, k)
        }
    }

    /// The relay decodes in round `j` and the destination, helped by the relay
    /// from round `j+1`, is still undecoded once the relay has spent `x_prev`
    /// but decodes by the time it has spent `x_cur`. With `undecoded_only` the
    /// second condition is dropped and `x_cur` is ignored.
    fn relayed_band(&self, j: usize, x_prev: f64, x_cur: f64, undecoded_only: bool) -> Result<f64> {
        let (tj, tj1) = (self.thr[j], self.thr[j - 1]);
        let s = self.cum[j];
        let c = self.c;
        let lrd = self.ch.lambda_rd;
        let band = |y: f64| -> f64 {
            let hi = ((c - y * x_prev) / s).max(0.0);
            let lo = if undecoded_only {
                0.0
            } else {
                ((c - y * x_cur) / s).max(0.0)
            };
            lrd * (-lrd * y).exp() * rect(self.ch, lo, hi, tj, tj1)
        };
        let opts = quad_opts();
        if undecoded_only {
            // Pr(relay decodes in j, g_sd S_j + g_rd x_prev < c)
            if x_prev <= 0.0 {
                return Ok(rect(self.ch, 0.0, tj, tj, tj1));
            }
            return Ok(integrate(band, 0.0, c / x_prev, &opts)?.value);
        }
        if x_cur <= x_prev {
            return Ok(0.0);
        }
        // lower destination bound reaches 0 at y = c / x_cur
        let knee = c / x_cur;
        let mut total = integrate(band, 0.0, knee, &opts)?.value;
        if x_prev <= 0.0 {
            total += (-lrd * knee).exp() * rect(self.ch, 0.0, tj, tj, tj1);
        } else {
            total += integrate(band, knee, c / x_prev, &opts)?.value;
        }
        Ok(total)
    }
}

/// Intermediate terms of the correlated RTD events.
pub fn corr_rtd_terms(ch: &CorrelatedChannel, cfg: &ProtocolConfig, pw: &PowerAllocation) -> Result<EventTerms> {
    ch.validate()?;
    cfg.validate()?;
    pw.validate(cfg.m_max)?;
    if cfg.protocol != Protocol::Rtd || cfg.coding != Coding::FixedLength {
        return Err(Error::config(
            "the correlated engine needs RTD with fixed-length coding",
        ));
    }
    let m_max = cfg.m_max;
    let k = m_max + 1;
    let cum: Vec<f64> = (0..=k).map(|m| pw.source_sum(m)).collect();
    if let Some(m) = (1..=k).find(|&m| cum[m] <= 0.0) {
        return Err(Error::InvalidPower(format!(
            "cumulative source power through round {m} is zero"
        )));
    }
    let c = cfg.initial_rate().exp_m1();
    let thr: Vec<f64> = (0..=k)
        .map(|m| if m == 0 { f64::INFINITY } else { c / cum[m] })
        .collect();
    let st = Setup { ch, pw, c, cum, thr };
    let t = &st.thr;

    let alpha: Vec<f64> = (1..=m_max).map(|m| rect(ch, 0.0, t[m], t[m], t[m - 1])).collect();
    let beta: Vec<f64> = (1..=k).map(|m| rect(ch, t[m], t[m - 1], 0.0, t[m - 1])).collect();
    let gamma = rect(ch, 0.0, t[m_max], 0.0, t[m_max]);

    let mut eps = vec![vec![0.0; k]; k];
    let mut vartheta = vec![0.0; m_max];
    for j in 1..=m_max {
        for m in j + 1..=k {
            let e = st.relayed_band(j, st.relay_power(j, m - 1), st.relay_power(j, m), false)?;
            eps[j - 1][m - 1] = clamp_probability(e, "correlated relayed success")?;
        }
        let v = st.relayed_band(j, st.relay_power(j, m_max), 0.0, true)?;
        vartheta[j - 1] = clamp_probability(v, "correlated relay span")?;
    }
    Ok(EventTerms {
        alpha,
        beta,
        gamma,
        eps,
        vartheta,
    })
}

pub fn corr_rtd_event_probs(
    ch: &CorrelatedChannel,
    cfg: &ProtocolConfig,
    pw: &PowerAllocation,
) -> Result<EventProbabilities> {
    Ok(corr_rtd_terms(ch, cfg, pw)?.events())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;
    use crate::rtd::rtd_event_probs;
    use crate::special::{bessel_i0e, quad_adaptive};
    use proptest::prelude::*;

    // joint density of (g_sd, g_sr)
    fn pdf(ch: &CorrelatedChannel, x: f64, y: f64) -> f64 {
        let l = ch.lambda;
        let q = 1.0 - ch.delta * ch.delta;
        let arg = 2.0 * l * ch.delta * (x * y).sqrt() / q;
        l * l / q * (-l * (x + y) / q + arg).exp() * bessel_i0e(arg)
    }

    fn pdf_rect(ch: &CorrelatedChannel, u: f64, v: f64, w: f64, z: f64) -> f64 {
        quad_adaptive(|x| quad_adaptive(|y| pdf(ch, x, y), w, z, 1e-12).unwrap(), u, v, 1e-12).unwrap()
    }

    #[test]
    fn independence_limit_is_a_product() {
        let ch = CorrelatedChannel::new(1.3, 0.5, 0.0);
        let (u, v, w, z): (f64, f64, f64, f64) = (0.1, 0.9, 0.4, 2.5);
        let expect = ((-1.3 * u).exp() - (-1.3 * v).exp()) * ((-1.3 * w).exp() - (-1.3 * z).exp());
        assert!((rect_prob(&ch, u, v, w, z).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn total_mass() {
        for d in [0.0, 0.3, 0.9, 1.0] {
            let ch = CorrelatedChannel::new(0.7, 0.5, d);
            let p = rect_prob(&ch, 0.0, f64::INFINITY, 0.0, f64::INFINITY).unwrap();
            assert!((p - 1.0).abs() < 1e-12, "delta {d}: {p}");
        }
    }

    #[test]
    fn matches_joint_density() {
        let ch = CorrelatedChannel::new(1.0, 0.5, 0.5);
        for &(u, v, w, z) in &[
            (0.0, 0.5, 0.0, 0.5),
            (0.2, 1.1, 0.7, 1.9),
            (1.5, 3.0, 0.05, 0.4),
            (0.0, 4.0, 2.0, 6.0),
        ] {
            let a = rect_prob(&ch, u, v, w, z).unwrap();
            let b = pdf_rect(&ch, u, v, w, z);
            assert!((a - b).abs() < 1e-9, "{:?}: {a} vs {b}", (u, v, w, z));
        }
        let strong = CorrelatedChannel::new(2.0, 0.5, 0.95);
        let a = rect_prob(&strong, 0.1, 0.6, 0.2, 0.9).unwrap();
        let b = pdf_rect(&strong, 0.1, 0.6, 0.2, 0.9);
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn full_correlation_is_diagonal() {
        let ch = CorrelatedChannel::new(1.0, 0.5, 1.0);
        let p = rect_prob(&ch, 0.0, 1.0, 0.5, 2.0).unwrap();
        assert!((p - ((-0.5f64).exp() - (-1.0f64).exp())).abs() < 1e-15);
        assert_eq!(rect_prob(&ch, 0.0, 0.4, 0.5, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn bad_rectangles() {
        let ch = CorrelatedChannel::new(1.0, 0.5, 0.5);
        assert!(rect_prob(&ch, 1.0, 0.5, 0.0, 1.0).is_err());
        assert!(rect_prob(&ch, -0.1, 0.5, 0.0, 1.0).is_err());
        assert!(rect_prob(&ch, 0.0, 0.5, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn unequal_source_links_rejected() {
        let ch = ChannelParams::new(0.5, 1.0, 0.5).with_delta(0.5);
        assert!(matches!(CorrelatedChannel::from_params(&ch), Err(Error::Config(_))));
    }

    fn cases() -> Vec<(usize, f64, PowerAllocation)> {
        vec![
            (0, 0.5, PowerAllocation::uniform(0, 4.0)),
            (1, 0.5, PowerAllocation::new(vec![3.0, 1.0], vec![0.0, 6.0])),
            (2, 1.0, PowerAllocation::new(vec![2.0, 1.5, 0.5], vec![0.0, 3.0, 2.0])),
            (3, 0.8, PowerAllocation::uniform(3, 1.2)),
        ]
    }

    #[test]
    fn zero_correlation_matches_independent_engine() {
        for (m, r, pw) in cases() {
            let cfg = ProtocolConfig::fixed_length(Protocol::Rtd, m, r);
            let corr = corr_rtd_event_probs(&CorrelatedChannel::new(1.0, 0.5, 0.0), &cfg, &pw).unwrap();
            let ind = rtd_event_probs(&ChannelParams::new(1.0, 1.0, 0.5), &cfg, &pw).unwrap();
            for (x, y) in corr.a.iter().zip(&ind.a).chain(corr.s.iter().zip(&ind.s)) {
                assert!((x - y).abs() < 1e-10, "M={m}: {x} vs {y}");
            }
            for (n, mm, p) in corr.spans() {
                assert!((p - ind.b(n, mm)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn full_correlation_is_single_user() {
        for (m, r, pw) in cases() {
            let cfg = ProtocolConfig::fixed_length(Protocol::Rtd, m, r);
            let ev = corr_rtd_event_probs(&CorrelatedChannel::new(1.0, 0.5, 1.0), &cfg, &pw).unwrap();
            let c = r.exp_m1();
            let single = 1.0 - (-c / pw.source_sum(m + 1)).exp();
            assert!((metrics::outage(&ev) - single).abs() < 1e-12);
        }
    }

    #[test]
    fn outage_is_continuous_toward_full_correlation() {
        let cfg = ProtocolConfig::fixed_length(Protocol::Rtd, 1, 0.5);
        let pw = PowerAllocation::uniform(1, 5.0);
        let at =
            |d: f64| metrics::outage(&corr_rtd_event_probs(&CorrelatedChannel::new(1.0, 0.2, d), &cfg, &pw).unwrap());
        assert!((at(0.999999) - at(1.0)).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn additive(d in 0.0f64..0.99, u in 0.0f64..2.0, du in 0.01f64..2.0, split in 0.05f64..0.95, w in 0.0f64..2.0, dw in 0.01f64..3.0) {
            let ch = CorrelatedChannel::new(1.0, 0.5, d);
            let v = u + du;
            let t = u + split * du;
            let whole = rect_prob(&ch, u, v, w, w + dw).unwrap();
            let parts = rect_prob(&ch, u, t, w, w + dw).unwrap() + rect_prob(&ch, t, v, w, w + dw).unwrap();
            prop_assert!((whole - parts).abs() < 1e-9);
        }

        #[test]
        fn marginals(d in 0.0f64..1.0, l in 0.2f64..3.0, u in 0.0f64..3.0, du in 0.0f64..3.0) {
            let ch = CorrelatedChannel::new(l, 0.5, d);
            let p = rect_prob(&ch, u, u + du, 0.0, f64::INFINITY).unwrap();
            prop_assert!((p - ((-l * u).exp() - (-l * (u + du)).exp())).abs() < 1e-9);
            let q = rect_prob(&ch, 0.0, f64::INFINITY, u, u + du).unwrap();
            prop_assert!((q - ((-l * u).exp() - (-l * (u + du)).exp())).abs() < 1e-9);
        }

        #[test]
        fn normalized(d in 0.0f64..1.0, m_max in 0usize..3, p in 0.2f64..20.0, r in 0.2f64..1.5) {
            let cfg = ProtocolConfig::fixed_length(Protocol::Rtd, m_max, r);
            let ev = corr_rtd_event_probs(&CorrelatedChannel::new(1.0, 0.4, d), &cfg, &PowerAllocation::uniform(m_max, p)).unwrap();
            prop_assert!((ev.sum_s() - 1.0).abs() < 1e-8);
            ev.validate(1e-8).unwrap();
        }
    }
}
