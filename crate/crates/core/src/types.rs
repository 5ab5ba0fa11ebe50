//! Channel, protocol and power descriptions plus the event/metric records that
//! the engines exchange.
//!
//! Rates are in nats per channel use. Lengths and energies are normalized by
//! the packet size Q, so the increment `1/R_(m) - 1/R_(m-1)` is the number of
//! channel uses (per information nat) spent in round `m`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingMode {
    /// Gains fixed for all rounds of a packet.
    #[default]
    QuasiStatic,
    /// Gains redrawn independently in every round.
    FastFading,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Repetition time diversity: same codeword, MRC at the receivers.
    Rtd,
    /// Incremental redundancy: receivers accumulate mutual information.
    Inr,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coding {
    #[default]
    FixedLength,
    VariableLength,
}

/// Rayleigh link parameters. Each `lambda_*` is the inverse mean channel gain of
/// that link; `f64::INFINITY` marks a link that never carries anything, which
/// is how the single-user (no relay) system is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    pub lambda_sr: f64,
    pub lambda_sd: f64,
    pub lambda_rd: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub fading: FadingMode,
}

impl ChannelParams {
    /// Independent quasi-static links.
    pub fn new(lambda_sr: f64, lambda_sd: f64, lambda_rd: f64) -> Self {
        ChannelParams {
            lambda_sr,
            lambda_sd,
            lambda_rd,
            delta: 0.0,
            fading: FadingMode::QuasiStatic,
        }
    }

    /// Source-destination link only.
    pub fn single_user(lambda_sd: f64) -> Self {
        Self::new(f64::INFINITY, lambda_sd, f64::INFINITY)
    }

    pub fn with_fading(mut self, fading: FadingMode) -> Self {
        self.fading = fading;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    /// True when no relay can ever help (source-relay or relay-destination link absent).
    pub fn relay_absent(&self) -> bool {
        self.lambda_sr.is_infinite() || self.lambda_rd.is_infinite()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, l) in [
            ("lambda_sr", self.lambda_sr),
            ("lambda_sd", self.lambda_sd),
            ("lambda_rd", self.lambda_rd),
        ] {
            if l.is_nan() || l <= 0.0 {
                return Err(Error::invalid(format!("{name} must be positive, got {l}")));
            }
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::invalid(format!("delta must lie in [0, 1], got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub protocol: Protocol,
    pub m_max: usize,
    /// `R_(1) .. R_(M+1)`, strictly decreasing.
    pub rates: Vec<f64>,
    pub coding: Coding,
}

impl ProtocolConfig {
    /// Fixed-length coding: every round has the length of the first, `R_(m) = R/m`.
    pub fn fixed_length(protocol: Protocol, m_max: usize, rate: f64) -> Self {
        ProtocolConfig {
            protocol,
            m_max,
            rates: fixed_ladder(rate, m_max),
            coding: Coding::FixedLength,
        }
    }

    pub fn variable_length(protocol: Protocol, rates: Vec<f64>) -> Self {
        ProtocolConfig {
            protocol,
            m_max: rates.len().saturating_sub(1),
            rates,
            coding: Coding::VariableLength,
        }
    }

    pub fn rounds(&self) -> usize {
        self.m_max + 1
    }

    pub fn initial_rate(&self) -> f64 {
        self.rates[0]
    }

    /// `R_(m)` for `m = 1..=M+1`.
    pub fn rate(&self, m: usize) -> f64 {
        self.rates[m - 1]
    }

    /// Normalized round lengths `1/R_(m) - 1/R_(m-1)` with `1/R_(0) = 0`.
    pub fn increments(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.rates
            .iter()
            .map(|&r| {
                let inv = 1.0 / r;
                let w = inv - prev;
                prev = inv;
                w
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.len() != self.m_max + 1 {
            return Err(Error::invalid(format!(
                "expected {} rates for M = {}, got {}",
                self.m_max + 1,
                self.m_max,
                self.rates.len()
            )));
        }
        for (i, &r) in self.rates.iter().enumerate() {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::invalid(format!("rate R_({}) = {r} is not positive", i + 1)));
            }
            if i > 0 && r >= self.rates[i - 1] {
                return Err(Error::invalid(format!(
                    "rates must be strictly decreasing, R_({}) = {r} >= R_({}) = {}",
                    i + 1,
                    i,
                    self.rates[i - 1]
                )));
            }
        }
        if self.coding == Coding::FixedLength {
            let r1 = self.rates[0];
            for (i, &r) in self.rates.iter().enumerate() {
                let m = (i + 1) as f64;
                if ((r * m - r1) / r1).abs() > 1e-12 {
                    return Err(Error::invalid(format!(
                        "fixed-length coding needs R_({}) = R_(1)/{}, got {r}",
                        i + 1,
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `R_(m) = R/m`, built by repeated division so that `R_(m)·m` is `R` to the last bit
/// whenever the division is exact.
pub fn fixed_ladder(rate: f64, m_max: usize) -> Vec<f64> {
    (1..=m_max + 1).map(|m| rate / m as f64).collect()
}

/// Per-round transmit powers. `relay[0]` is carried for symmetry only: the relay
/// cannot transmit before it has heard the first round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerAllocation {
    pub source: Vec<f64>,
    pub relay: Vec<f64>,
}

impl PowerAllocation {
    pub fn new(source: Vec<f64>, relay: Vec<f64>) -> Self {
        PowerAllocation { source, relay }
    }

    /// Every round at power `p`, relay included from round 2 on.
    pub fn uniform(m_max: usize, p: f64) -> Self {
        let mut relay = vec![p; m_max + 1];
        relay[0] = 0.0;
        PowerAllocation {
            source: vec![p; m_max + 1],
            relay,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        PowerAllocation {
            source: self.source.iter().map(|p| p * k).collect(),
            relay: self.relay.iter().map(|p| p * k).collect(),
        }
    }

    pub fn validate(&self, m_max: usize) -> Result<()> {
        if self.source.len() != m_max + 1 || self.relay.len() != m_max + 1 {
            return Err(Error::InvalidPower(format!(
                "expected {} source and relay powers, got {} and {}",
                m_max + 1,
                self.source.len(),
                self.relay.len()
            )));
        }
        if let Some(p) = self
            .source
            .iter()
            .chain(self.relay.iter())
            .find(|p| !(p.is_finite() && **p >= 0.0))
        {
            return Err(Error::InvalidPower(format!(
                "powers must be finite and non-negative, got {p}"
            )));
        }
        Ok(())
    }

    /// Source power accumulated over rounds `1..=m`.
    pub fn source_sum(&self, m: usize) -> f64 {
        self.source[..m].iter().sum()
    }

    /// Relay power accumulated over rounds `from..=to` (empty when `from > to`).
    pub fn relay_sum(&self, from: usize, to: usize) -> f64 {
        if from > to {
            0.0
        } else {
            self.relay[from - 1..to].iter().sum()
        }
    }
}

/// Probabilities of the protocol events.
///
/// * `a[m-1]`: the destination first decodes in round `m`.
/// * `s[m-1]`: the source's last transmission is round `m`.
/// * `b[n-1][m-1]`: the relay decodes in round `n` and transmits in rounds `n+1..=m`
///   (only `n < m` entries are meaningful; the rest are zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventProbabilities {
    pub a: Vec<f64>,
    pub s: Vec<f64>,
    pub b: Vec<Vec<f64>>,
}

impl EventProbabilities {
    pub fn zeros(m_max: usize) -> Self {
        let k = m_max + 1;
        EventProbabilities {
            a: vec![0.0; k],
            s: vec![0.0; k],
            b: vec![vec![0.0; k]; k],
        }
    }

    pub fn m_max(&self) -> usize {
        self.a.len() - 1
    }

    pub fn b(&self, n: usize, m: usize) -> f64 {
        self.b[n - 1][m - 1]
    }

    /// `(n, m, Pr(B_{n,m}))` for `1 <= n < m <= M+1`.
    pub fn spans(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let k = self.a.len();
        (1..k).flat_map(move |n| (n + 1..=k).map(move |m| (n, m, self.b(n, m))))
    }

    pub fn sum_a(&self) -> f64 {
        self.a.iter().sum()
    }

    pub fn sum_s(&self) -> f64 {
        self.s.iter().sum()
    }

    /// Checks ranges and the two sum rules to tolerance `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let all = self
            .a
            .iter()
            .chain(self.s.iter())
            .copied()
            .chain(self.spans().map(|(_, _, p)| p));
        for p in all {
            if !(p >= -tol && p <= 1.0 + tol) {
                return Err(Error::Numerical {
                    what: "event probability out of range".into(),
                    estimate: p,
                    error_bound: tol,
                });
            }
        }
        let ss = self.sum_s();
        if (ss - 1.0).abs() > tol {
            return Err(Error::Numerical {
                what: "stop probabilities do not sum to one".into(),
                estimate: ss,
                error_bound: tol,
            });
        }
        let sa = self.sum_a();
        if sa > 1.0 + tol {
            return Err(Error::Numerical {
                what: "success probabilities exceed one".into(),
                estimate: sa,
                error_bound: tol,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Nats per channel use.
    pub throughput: f64,
    pub outage: f64,
    pub phi_s: f64,
    /// Zero when the relay is never active, see `relay_active`.
    pub phi_r: f64,
    pub phi_total: f64,
    pub relay_active: bool,
}

/// Bit error probabilities of the three feedback links.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackNoise {
    /// Destination to source.
    #[serde(default)]
    pub p_sd: f64,
    /// Destination to relay.
    #[serde(default)]
    pub p_rd: f64,
    /// Relay to source.
    #[serde(default)]
    pub p_sr: f64,
}

impl FeedbackNoise {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn is_noiseless(&self) -> bool {
        self.p_sd == 0.0 && self.p_rd == 0.0 && self.p_sr == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_sd", self.p_sd), ("p_rd", self.p_rd), ("p_sr", self.p_sr)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!(
                    "feedback error probability {name} = {p} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// `R_(m) = q / Σ_{n<=m} l_n`.
pub fn rates_from_lengths(q: f64, lengths: &[f64]) -> Result<Vec<f64>> {
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::invalid(format!("packet size must be positive, got {q}")));
    }
    let mut total = 0.0;
    lengths
        .iter()
        .map(|&l| {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::invalid(format!("round length must be positive, got {l}")));
            }
            total += l;
            Ok(q / total)
        })
        .collect()
}

/// Inverse of [`rates_from_lengths`]: `l_m = q (1/R_(m) - 1/R_(m-1))`.
pub fn lengths_from_rates(q: f64, rates: &[f64]) -> Result<Vec<f64>> {
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::invalid(format!("packet size must be positive, got {q}")));
    }
    let mut prev = 0.0;
    rates
        .iter()
        .map(|&r| {
            let inv = 1.0 / r;
            if !(r.is_finite() && r > 0.0) || inv <= prev {
                return Err(Error::invalid("rates must be positive and strictly decreasing"));
            }
            let l = q * (inv - prev);
            prev = inv;
            Ok(l)
        })
        .collect()
}
