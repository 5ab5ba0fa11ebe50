//! Incremental redundancy over independent quasi-static Rayleigh fading.
//!
//! A receiver has decoded after round `m` once its accumulated mutual
//! information `Σ_i w_i log(1 + g P_i)` reaches one (per information nat),
//! `w_i = 1/R_(i) - 1/R_(i-1)`. The source-only threshold `x_m` is the gain
//! at which that happens after `m` rounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{factor_terms, FactorTerms, MissModel};
use crate::rtd::g_function;
use crate::special::{clamp_probability, exp_cdf, integrate, root_increasing, QuadOptions};
use crate::types::{ChannelParams, Coding, EventProbabilities, PowerAllocation, Protocol, ProtocolConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InrMode {
    /// Nested quadrature over the exact decoding region.
    #[serde(rename = "exact2d")]
    Exact2D,
    /// `log(1 + x) ≈ x` in the relayed-destination terms.
    #[serde(rename = "low_snr")]
    LowSnrApprox,
    /// Lower bound on performance (upper bound on every miss probability).
    #[serde(rename = "lower_bound_t1")]
    LowerBoundT1,
    /// Upper bound on performance, only defined at low SNR.
    #[serde(rename = "upper_bound_t2")]
    UpperBoundT2,
}

impl InrMode {
    pub fn name(&self) -> &'static str {
        match self {
            InrMode::Exact2D => "exact2d",
            InrMode::LowSnrApprox => "low_snr",
            InrMode::LowerBoundT1 => "lower_bound_t1",
            InrMode::UpperBoundT2 => "upper_bound_t2",
        }
    }
}

/// Accumulated information per nat, `Σ_{i<=m} w_i log(1 + g P_i)`.
fn accumulated(w: &[f64], powers: &[f64], g: f64) -> f64 {
    w.iter().zip(powers).map(|(w, p)| w * (g * p).ln_1p()).sum()
}

/// Relay's maximum decodable rate after round `m`, `U^r_m = R_(m) Σ_{i<=m} w_i log(1 + g P^s_i)`.
pub fn inr_rate_relay(g_sr: f64, cfg: &ProtocolConfig, pw: &PowerAllocation, m: usize) -> f64 {
    let w = cfg.increments();
    cfg.rate(m) * accumulated(&w[..m], &pw.source[..m], g_sr)
}

/// Destination's maximum decodable rate after round `m` when the relay took
/// over after round `j`; `j == m` is the source-only case.
pub fn inr_rate_dest(g_sd: f64, g_rd: f64, cfg: &ProtocolConfig, pw: &PowerAllocation, j: usize, m: usize) -> f64 {
    assert!(j <= m, "takeover round after the current round");
    let w = cfg.increments();
    let direct = accumulated(&w[..j], &pw.source[..j], g_sd);
    let relayed = accumulated(&w[j..m], &pw.relay[j..m], g_rd);
    cfg.rate(m) * (direct + relayed)
}

/// Source-only decoding thresholds `x_1..x_{M+1}`: the gain at which
/// `U_m(x) = R_(m)`. Relay and destination share them (the relay sees the
/// same source transmissions). Rounds before the first non-zero source power
/// get `inf`.
pub fn solve_thresholds(cfg: &ProtocolConfig, pw: &PowerAllocation) -> Result<Vec<f64>> {
    if pw.source.iter().all(|&p| p == 0.0) {
        return Err(Error::NoRoot("all source powers are zero".into()));
    }
    let w = cfg.increments();
    (1..=cfg.rounds())
        .map(|m| {
            let ps = &pw.source[..m];
            let pmax = ps.iter().cloned().fold(0.0, f64::max);
            if pmax == 0.0 {
                return Ok(f64::INFINITY);
            }
            let wsum: f64 = w[..m].iter().sum();
            let hint = (1.0 / wsum).exp_m1() / pmax;
            root_increasing(|x| accumulated(&w[..m], ps, x), 1.0, hint)
        })
        .collect()
}

struct InrModel<'a> {
    ch: &'a ChannelParams,
    pw: &'a PowerAllocation,
    mode: InrMode,
    m_max: usize,
    w: Vec<f64>,
    rate: f64,
    /// thresholds actually used for Fr and Fd in this mode
    x: Vec<f64>,
    quad: QuadOptions,
}

impl<'a> InrModel<'a> {
    fn new(ch: &'a ChannelParams, cfg: &ProtocolConfig, pw: &'a PowerAllocation, mode: InrMode) -> Result<Self> {
        ch.validate()?;
        cfg.validate()?;
        pw.validate(cfg.m_max)?;
        if cfg.protocol != Protocol::Inr {
            return Err(Error::config("the INR engine needs the INR protocol"));
        }
        let bound = matches!(mode, InrMode::LowerBoundT1 | InrMode::UpperBoundT2);
        if bound && cfg.coding != Coding::FixedLength {
            return Err(Error::config("the INR bounds need fixed-length coding"));
        }
        let rate = cfg.initial_rate();
        let x = match mode {
            InrMode::Exact2D | InrMode::LowSnrApprox => solve_thresholds(cfg, pw)?,
            InrMode::LowerBoundT1 => (1..=cfg.rounds())
                .map(|m| (rate / m as f64).exp_m1() / geomean(&pw.source[..m]))
                .collect(),
            InrMode::UpperBoundT2 => (1..=cfg.rounds())
                .map(|m| {
                    let r = t2_ratio(rate, &pw.source[..m], &[])?;
                    Ok((r.powf(1.0 / m as f64) - 1.0).max(0.0).sqrt())
                })
                .collect::<Result<Vec<_>>>()?,
        };
        // Round-by-round bounds need not be monotone in m while the true miss
        // probabilities are. Tighten them into monotone envelopes that remain bounds.
        let mut x = x;
        match mode {
            InrMode::LowerBoundT1 => {
                for m in 1..x.len() {
                    x[m] = x[m].min(x[m - 1]);
                }
            }
            InrMode::UpperBoundT2 => {
                for m in (0..x.len().saturating_sub(1)).rev() {
                    x[m] = x[m].max(x[m + 1]);
                }
            }
            _ => {}
        }
        Ok(InrModel {
            ch,
            pw,
            mode,
            m_max: cfg.m_max,
            w: cfg.increments(),
            rate,
            x,
            quad: QuadOptions {
                rel_tol: 1e-8,
                abs_tol: 1e-15,
                max_subdivisions: 2000,
            },
        })
    }

    fn exact_relayed(&self, j: usize, k: usize) -> Result<f64> {
        let lsd = self.ch.lambda_sd;
        let lrd = self.ch.lambda_rd;
        let fd = exp_cdf(lsd, self.x[j - 1]);
        let ws = &self.w[..j];
        let ps = &self.pw.source[..j];
        let wr = &self.w[j..k];
        let pr = &self.pw.relay[j..k];
        let pmax = pr.iter().cloned().fold(0.0, f64::max);
        if pmax == 0.0 || lrd.is_infinite() {
            return Ok(fd);
        }
        let wsum: f64 = wr.iter().sum();
        // u = 1 - e^{-lsd x} runs over the source-only failure region [0, Fd(j))
        let inner = |u: f64| -> f64 {
            let x = -(-u).ln_1p() / lsd;
            let left = 1.0 - accumulated(ws, ps, x);
            if left <= 0.0 {
                return 0.0;
            }
            let hint = (left / wsum).exp_m1() / pmax;
            match root_increasing(|y| accumulated(wr, pr, y), left, hint) {
                Ok(y) => exp_cdf(lrd, y),
                Err(_) => f64::NAN,
            }
        };
        let q = integrate(inner, 0.0, fd, &self.quad)?;
        clamp_probability(q.value, "relayed miss probability")
    }

    fn linear_weights(&self, j: usize, k: usize) -> (f64, f64) {
        let a: f64 = self.w[..j].iter().zip(&self.pw.source[..j]).map(|(w, p)| w * p).sum();
        let b: f64 = self.w[j..k].iter().zip(&self.pw.relay[j..k]).map(|(w, p)| w * p).sum();
        (a, b)
    }

    fn t1_relayed(&self, j: usize, k: usize) -> Result<f64> {
        let lsd = self.ch.lambda_sd;
        let lrd = self.ch.lambda_rd;
        let kf = k as f64;
        let jf = j as f64;
        let prod_log: f64 = self.pw.source[..j]
            .iter()
            .chain(&self.pw.relay[j..k])
            .map(|p| p.ln())
            .sum();
        if !prod_log.is_finite() || lrd.is_infinite() {
            // a silent round makes the geometric mean zero: the bound is trivial
            return Ok(exp_cdf(lsd, self.x[j - 1]).max(if prod_log.is_finite() { 0.0 } else { 1.0 }));
        }
        let t = (self.rate / kf).exp_m1() / (prod_log / kf).exp();
        let s = t.powf(kf / (kf - jf));
        let p = jf / (kf - jf);
        let v = integrate(
            |u: f64| {
                let x = -(-u).ln_1p() / lsd;
                if x <= 0.0 {
                    0.0
                } else {
                    (-lrd * s * x.powf(-p)).exp()
                }
            },
            0.0,
            1.0,
            &self.quad,
        )?;
        clamp_probability(1.0 - v.value, "lower-bound miss probability")
    }

    fn t2_relayed(&self, j: usize, k: usize) -> Result<f64> {
        let lsd = self.ch.lambda_sd;
        let lrd = self.ch.lambda_rd;
        let r = t2_ratio(self.rate, &self.pw.source[..j], &self.pw.relay[j..k])?;
        let jf = j as f64;
        let span = (k - j) as f64;
        let upper = (r.powf(1.0 / jf) - 1.0).max(0.0).sqrt();
        let rk = r.powf(1.0 / span);
        let q = integrate(
            |x: f64| {
                let arg = rk * (1.0 + x * x).powf(-jf / span) - 1.0;
                lsd * (-lsd * x).exp() * exp_cdf(lrd, arg.max(0.0).sqrt())
            },
            0.0,
            upper,
            &self.quad,
        )?;
        clamp_probability(q.value, "upper-bound miss probability")
    }
}

fn geomean(p: &[f64]) -> f64 {
    (p.iter().map(|p| p.ln()).sum::<f64>() / p.len() as f64).exp()
}

/// `r = e^{2R} / Π (1 + P_i^2)`, refused below one.
fn t2_ratio(rate: f64, source: &[f64], relay: &[f64]) -> Result<f64> {
    let log_r = 2.0 * rate - source.iter().chain(relay).map(|p| (p * p).ln_1p()).sum::<f64>();
    if log_r < 0.0 {
        return Err(Error::Domain(format!(
            "upper bound needs r >= 1, got r = {:.6} (powers too high for the rate)",
            log_r.exp()
        )));
    }
    Ok(log_r.exp())
}

impl MissModel for InrModel<'_> {
    fn m_max(&self) -> usize {
        self.m_max
    }

    fn relay_miss(&self, m: usize) -> Result<f64> {
        Ok(exp_cdf(self.ch.lambda_sr, self.x[m - 1]))
    }

    fn dest_miss(&self, m: usize) -> Result<f64> {
        Ok(exp_cdf(self.ch.lambda_sd, self.x[m - 1]))
    }

    fn relayed_start(&self, j: usize) -> Result<f64> {
        match self.mode {
            InrMode::LowSnrApprox => {
                let (a, _) = self.linear_weights(j, j);
                Ok(exp_cdf(self.ch.lambda_sd, 1.0 / a))
            }
            _ => self.dest_miss(j),
        }
    }

    fn relayed_miss(&self, j: usize, k: usize) -> Result<f64> {
        match self.mode {
            InrMode::Exact2D => self.exact_relayed(j, k),
            InrMode::LowSnrApprox => {
                let (a, b) = self.linear_weights(j, k);
                Ok(g_function(self.ch.lambda_sd, self.ch.lambda_rd, 1.0, a, b))
            }
            InrMode::LowerBoundT1 => self.t1_relayed(j, k),
            InrMode::UpperBoundT2 => self.t2_relayed(j, k),
        }
    }
}

pub type InrTerms = FactorTerms;

pub fn inr_terms(ch: &ChannelParams, cfg: &ProtocolConfig, pw: &PowerAllocation, mode: InrMode) -> Result<InrTerms> {
    factor_terms(&InrModel::new(ch, cfg, pw, mode)?)
}

/// `(α, β, γ, ω)`.
pub type SourceTerms = (Vec<f64>, Vec<f64>, f64, Vec<f64>);

/// `α`, `β`, `γ`, `ω` (they only involve the source-only thresholds).
pub fn inr_source_terms(ch: &ChannelParams, cfg: &ProtocolConfig, pw: &PowerAllocation) -> Result<SourceTerms> {
    // the low-SNR mode solves the same thresholds and evaluates no 2-D integral
    let t = inr_terms(ch, cfg, pw, InrMode::LowSnrApprox)?;
    Ok((t.terms.alpha, t.terms.beta, t.terms.gamma, t.omega))
}

/// `θ_{j,m}` (as `theta[j-1][m-1]`) and `ρ_n` in the requested mode.
pub fn inr_theta_rho(
    ch: &ChannelParams,
    cfg: &ProtocolConfig,
    pw: &PowerAllocation,
    mode: InrMode,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let t = inr_terms(ch, cfg, pw, mode)?;
    Ok((t.theta, t.rho))
}

pub fn inr_event_probs(
    ch: &ChannelParams,
    cfg: &ProtocolConfig,
    pw: &PowerAllocation,
    mode: InrMode,
) -> Result<EventProbabilities> {
    Ok(inr_terms(ch, cfg, pw, mode)?.terms.events())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fixed(m_max: usize, r: f64) -> ProtocolConfig {
        ProtocolConfig::fixed_length(Protocol::Inr, m_max, r)
    }

    #[test]
    fn rate_examples() {
        let cfg = ProtocolConfig::variable_length(Protocol::Inr, vec![1.0, 0.5]);
        let pw = PowerAllocation::new(vec![1.0, 3.0], vec![0.0, 1.0]);
        assert_eq!(inr_rate_relay(0.0, &cfg, &pw, 2), 0.0);
        assert_relative_eq!(
            inr_rate_relay(1.0, &cfg, &pw, 2),
            0.5 * (2f64.ln() + 4f64.ln()),
            max_relative = 1e-15
        );
        let eq = PowerAllocation::uniform(2, 3.0);
        let f = fixed(2, 1.0);
        assert_relative_eq!(
            inr_rate_relay(0.7, &f, &eq, 3),
            (0.7f64 * 3.0).ln_1p(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn dest_rate_examples() {
        let cfg = fixed(1, 1.0);
        let pw = PowerAllocation::new(vec![1.0, 5.0], vec![0.0, 1.0]);
        assert_eq!(inr_rate_dest(0.0, 0.0, &cfg, &pw, 1, 2), 0.0);
        assert_relative_eq!(
            inr_rate_dest(1.0, 1.0, &cfg, &pw, 1, 2),
            2f64.ln(),
            max_relative = 1e-15
        );
        assert_eq!(
            inr_rate_dest(0.4, 9.0, &cfg, &pw, 2, 2),
            inr_rate_relay(0.4, &cfg, &pw, 2)
        );
    }

    #[test]
    fn threshold_examples() {
        let cfg = fixed(2, 1.2);
        let pw = PowerAllocation::new(vec![2.0, 0.5, 7.0], vec![0.0; 3]);
        let x = solve_thresholds(&cfg, &pw).unwrap();
        assert_relative_eq!(x[0], 1.2f64.exp_m1() / 2.0, max_relative = 1e-12);
        for (m, &xm) in x.iter().enumerate() {
            let u = inr_rate_relay(xm, &cfg, &pw, m + 1);
            assert!((u - cfg.rate(m + 1)).abs() < 1e-12);
        }
        let eq = PowerAllocation::uniform(2, 4.0);
        let x = solve_thresholds(&cfg, &eq).unwrap();
        for (m, &xm) in x.iter().enumerate() {
            assert_relative_eq!(xm, (1.2 / (m + 1) as f64).exp_m1() / 4.0, max_relative = 1e-11);
        }
        let zero = PowerAllocation::new(vec![0.0; 3], vec![0.0; 3]);
        assert!(matches!(solve_thresholds(&cfg, &zero), Err(Error::NoRoot(_))));
    }

    #[test]
    fn rates_increase_with_gain() {
        let cfg = ProtocolConfig::variable_length(Protocol::Inr, vec![1.0, 0.6, 0.3]);
        let pw = PowerAllocation::new(vec![1.0, 0.2, 3.0], vec![0.0, 2.0, 0.5]);
        let mut prev = 0.0;
        for i in 1..200 {
            let g = i as f64 * 0.05;
            let u = inr_rate_relay(g, &cfg, &pw, 3);
            let d = inr_rate_dest(g, g, &cfg, &pw, 1, 3);
            assert!(u > prev);
            assert!(inr_rate_dest(g + 1e-6, g, &cfg, &pw, 1, 3) > d);
            assert!(inr_rate_dest(g, g + 1e-6, &cfg, &pw, 1, 3) > d);
            prev = u;
        }
    }

    // Direct 2-D oracle: integrate the joint density of (g_sd, g_rd) over the
    // failure region on a fine product grid in the original coordinates.
    fn brute_relayed(ch: &ChannelParams, cfg: &ProtocolConfig, pw: &PowerAllocation, j: usize, k: usize) -> f64 {
        let n = 1500;
        let w = cfg.increments();
        let mut total = 0.0;
        // outer over u_sd = 1 - e^{-λ x}, inner over u_rd, midpoint rule
        for a in 0..n {
            let usd = (a as f64 + 0.5) / n as f64;
            let x = -(-usd).ln_1p() / ch.lambda_sd;
            let direct = accumulated(&w[..j], &pw.source[..j], x);
            if direct >= 1.0 {
                continue;
            }
            let mut inside = 0usize;
            for b in 0..n {
                let urd = (b as f64 + 0.5) / n as f64;
                let y = -(-urd).ln_1p() / ch.lambda_rd;
                if direct + accumulated(&w[j..k], &pw.relay[j..k], y) < 1.0 {
                    inside += 1;
                }
            }
            total += inside as f64 / n as f64;
        }
        total / n as f64
    }

    #[test]
    fn exact_relayed_against_grid() {
        let ch = ChannelParams::new(0.5, 1.0, 0.5);
        let cfg = ProtocolConfig::variable_length(Protocol::Inr, vec![1.0, 0.6, 0.3]);
        let pw = PowerAllocation::new(vec![1.5, 0.7, 2.0], vec![0.0, 1.2, 0.4]);
        let model = InrModel::new(&ch, &cfg, &pw, InrMode::Exact2D).unwrap();
        for (j, k) in [(1, 2), (1, 3), (2, 3)] {
            let e = model.exact_relayed(j, k).unwrap();
            let b = brute_relayed(&ch, &cfg, &pw, j, k);
            assert!((e - b).abs() < 2e-3, "H_{j}({k}): {e} vs grid {b}");
        }
    }

    #[test]
    fn theta_vanishes_without_relay_power() {
        let ch = ChannelParams::new(0.5, 1.0, 0.5);
        let cfg = fixed(1, 1.0);
        let pw = PowerAllocation::new(vec![1.0, 1.0], vec![0.0, 1e-12]);
        let (theta, _) = inr_theta_rho(&ch, &cfg, &pw, InrMode::Exact2D).unwrap();
        assert!(theta[0][1] < 1e-9);
    }

    #[test]
    fn t1_is_exact_for_equal_powers_on_relay_side() {
        let ch = ChannelParams::new(0.5, 1.0, 0.5);
        let cfg = fixed(2, 1.0);
        let pw = PowerAllocation::uniform(2, 3.0);
        let exact = inr_terms(&ch, &cfg, &pw, InrMode::Exact2D).unwrap();
        let t1 = inr_terms(&ch, &cfg, &pw, InrMode::LowerBoundT1).unwrap();
        for m in 0..2 {
            assert_relative_eq!(exact.omega[m], t1.omega[m], max_relative = 1e-10);
            assert_relative_eq!(exact.terms.alpha[m], t1.terms.alpha[m], max_relative = 1e-10);
        }
    }

    #[test]
    fn t2_refuses_high_power() {
        let ch = ChannelParams::new(0.5, 1.0, 0.5);
        let cfg = fixed(1, 1.0);
        let pw = PowerAllocation::uniform(1, 10.0);
        assert!(matches!(
            inr_event_probs(&ch, &cfg, &pw, InrMode::UpperBoundT2),
            Err(Error::Domain(_))
        ));
        let vl = ProtocolConfig::variable_length(Protocol::Inr, vec![1.0, 0.6]);
        assert!(matches!(
            inr_event_probs(&ch, &vl, &PowerAllocation::uniform(1, 0.1), InrMode::LowerBoundT1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn variable_length_ladder_is_accepted() {
        let ch = ChannelParams::new(0.5, 1.0, 0.5);
        let cfg = ProtocolConfig::variable_length(Protocol::Inr, vec![1.0, 0.6, 0.3]);
        let ev = inr_event_probs(&ch, &cfg, &PowerAllocation::uniform(2, 2.0), InrMode::Exact2D).unwrap();
        assert_eq!(ev.a.len(), 3);
        ev.validate(1e-9).unwrap();
    }

    #[test]
    fn low_snr_tracks_exact() {
        let ch = ChannelParams::new(0.5, 1.0, 0.5);
        // rates low enough that decoding is not hopeless at these powers
        for (db, r) in [(-20.0, 0.01), (-15.0, 0.03), (-10.0, 0.1)] {
            let cfg = fixed(1, r);
            let p = 10f64.powf(db / 10.0);
            let pw = PowerAllocation::uniform(1, p);
            let e = inr_event_probs(&ch, &cfg, &pw, InrMode::Exact2D).unwrap();
            let l = inr_event_probs(&ch, &cfg, &pw, InrMode::LowSnrApprox).unwrap();
            let te = metrics::throughput(&e, &cfg);
            let tl = metrics::throughput(&l, &cfg);
            assert!(((te - tl) / te).abs() < 0.05, "{db} dB: {te} vs {tl}");
            let oe = metrics::outage(&e);
            let ol = metrics::outage(&l);
            assert!(((oe - ol) / oe).abs() < 0.05);
        }
    }

    prop_compose! {
        fn instance()(m_max in 0usize..3)
            (lsr in 0.1f64..3.0, lsd in 0.1f64..3.0, lrd in 0.1f64..3.0,
             r in 0.2f64..2.0,
             ps in prop::collection::vec(0.05f64..30.0, m_max + 1),
             pr in prop::collection::vec(0.0f64..30.0, m_max + 1))
            -> (ChannelParams, ProtocolConfig, PowerAllocation)
        {
            let mut pr = pr;
            pr[0] = 0.0;
            (ChannelParams::new(lsr, lsd, lrd),
             ProtocolConfig::fixed_length(Protocol::Inr, ps.len() - 1, r),
             PowerAllocation::new(ps, pr))
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn exact_is_normalized((ch, cfg, pw) in instance()) {
            let ev = inr_event_probs(&ch, &cfg, &pw, InrMode::Exact2D).unwrap();
            ev.validate(1e-9).unwrap();
        }

        #[test]
        fn bound_ordering((ch, cfg, pw) in instance()) {
            let exact = metrics::outage(&inr_event_probs(&ch, &cfg, &pw, InrMode::Exact2D).unwrap());
            let t1 = metrics::outage(&inr_event_probs(&ch, &cfg, &pw, InrMode::LowerBoundT1).unwrap());
            prop_assert!(t1 >= exact - 1e-7, "T1 outage {} < exact {}", t1, exact);
            if let Ok(ev) = inr_event_probs(&ch, &cfg, &pw, InrMode::UpperBoundT2) {
                let t2 = metrics::outage(&ev);
                prop_assert!(t2 <= exact + 1e-7, "T2 outage {} > exact {}", t2, exact);
            }
        }
    }
}
