//! Experiment configuration: one strict JSON document.

use std::path::Path;

use relayarq::inr::InrMode;
use relayarq::mc::McConfig;
use relayarq::optimizer::{GridSpec, Objective, OptProblem, Scenario};
use relayarq::{
    fixed_ladder, ChannelParams, Coding, Error, FadingMode, FeedbackNoise, PowerAllocation, Protocol, ProtocolConfig,
    Result,
};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub channel: ChannelSection,
    pub protocol: ProtocolSection,
    pub powers: PowersSection,
    #[serde(default)]
    pub feedback: FeedbackNoise,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub opt: OptSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    /// `null` or absent means no relay.
    #[serde(default)]
    pub lambda_sr: Option<f64>,
    pub lambda_sd: f64,
    #[serde(default)]
    pub lambda_rd: Option<f64>,
    #[serde(default)]
    pub delta: f64,
    /// Sweep over correlation factors instead of `delta`.
    #[serde(default)]
    pub delta_sweep: Option<Vec<f64>>,
    #[serde(default)]
    pub fading: FadingMode,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub kind: Protocol,
    #[serde(default)]
    pub coding: Coding,
    /// Number of retransmissions for fixed-length coding.
    #[serde(default)]
    pub m_max: Option<usize>,
    /// Initial rate `R_(1)` for fixed-length coding, nats per channel use.
    #[serde(default)]
    pub rate: Option<f64>,
    /// Full ladder `R_(1) > ... > R_(M+1)` for variable-length coding.
    #[serde(default)]
    pub rates: Option<Vec<f64>>,
    /// Sweep over the number of retransmissions (fixed-length only).
    #[serde(default)]
    pub m_sweep: Option<Vec<usize>>,
    #[serde(default = "default_inr_mode")]
    pub inr_mode: InrMode,
    /// Unit of `rate` and `rates`; converted to nats on load.
    #[serde(default)]
    pub rate_unit: RateUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RateUnit {
    #[default]
    Nats,
    Bits,
}

impl RateUnit {
    fn to_nats(self, r: f64) -> f64 {
        match self {
            RateUnit::Nats => r,
            RateUnit::Bits => r * std::f64::consts::LN_2,
        }
    }
}

fn default_inr_mode() -> InrMode {
    InrMode::Exact2D
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowersSection {
    /// Per-round power level in dB; one experiment point per entry.
    pub snr_db: Vec<f64>,
    /// Per-round source offsets in dB, `M+1` entries (default 0).
    #[serde(default)]
    pub source_offsets_db: Option<Vec<f64>>,
    /// Per-round relay offsets in dB, `M+1` entries, the first is unused (default 0).
    #[serde(default)]
    pub relay_offsets_db: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub n_packets: u64,
    pub seed: u64,
    pub antithetic: bool,
    /// Evaluate with the simulator alone (no closed form).
    pub only: bool,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            n_packets: 1_000_000,
            seed: 1,
            antithetic: false,
            only: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[default]
    SumPower,
    Individual,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptSection {
    pub objective: Objective,
    pub scenario: ScenarioKind,
    /// Relay limit relative to the source limit in the individual scenario, dB.
    pub relay_offset_db: f64,
    pub free_rates: bool,
    pub rate_bounds: (f64, f64),
    pub grid: GridSpec,
    pub starts: usize,
    pub max_iters: u64,
    /// Outage caps for throughput maximization; one point per cap.
    pub outage_caps: Option<Vec<f64>>,
    /// Outage target of the coverage command.
    pub epsilon: f64,
    /// Initial `lambda_sd` bracket of the coverage command.
    pub lambda_bounds: (f64, f64),
}

impl Default for OptSection {
    fn default() -> Self {
        let base = OptProblem::new(
            ChannelParams::single_user(1.0),
            ProtocolConfig::fixed_length(Protocol::Rtd, 0, 1.0),
            Objective::MaxThroughput,
            Scenario::SumPower { phi_total: 1.0 },
        );
        OptSection {
            objective: Objective::MaxThroughput,
            scenario: ScenarioKind::SumPower,
            relay_offset_db: 0.0,
            free_rates: false,
            rate_bounds: base.rate_bounds,
            grid: GridSpec::default(),
            starts: base.starts,
            max_iters: base.max_iters,
            outage_caps: None,
            epsilon: 1e-3,
            lambda_bounds: (1e-3, 1.0),
        }
    }
}

/// One experiment point of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub snr_db: f64,
    pub channel: ChannelParams,
    pub protocol: ProtocolConfig,
    pub powers: PowerAllocation,
    pub outage_cap: Option<f64>,
}

pub fn load(path: &Path) -> std::result::Result<(Config, Vec<u8>), String> {
    let raw = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let cfg: Config = serde_json::from_slice(&raw).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok((cfg, raw))
}

fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

impl Config {
    pub fn mc_config(&self, seed_override: Option<u64>) -> McConfig {
        McConfig {
            n_packets: self.mc.n_packets,
            seed: seed_override.unwrap_or(self.mc.seed),
            antithetic: self.mc.antithetic,
        }
    }

    fn base_channel(&self) -> ChannelParams {
        let c = &self.channel;
        ChannelParams {
            lambda_sr: c.lambda_sr.unwrap_or(f64::INFINITY),
            lambda_sd: c.lambda_sd,
            lambda_rd: c.lambda_rd.unwrap_or(f64::INFINITY),
            delta: c.delta,
            fading: c.fading,
        }
    }

    fn protocol_for(&self, m_max: Option<usize>) -> Result<ProtocolConfig> {
        let p = &self.protocol;
        let cfg = match p.coding {
            Coding::FixedLength => {
                if p.rates.is_some() {
                    return Err(Error::config(
                        "protocol.rates is for variable-length coding; use protocol.rate",
                    ));
                }
                let rate = p.rate.ok_or_else(|| Error::config("protocol.rate is required"))?;
                let rate = p.rate_unit.to_nats(rate);
                let m = m_max
                    .or(p.m_max)
                    .ok_or_else(|| Error::config("protocol.m_max is required"))?;
                ProtocolConfig {
                    protocol: p.kind,
                    m_max: m,
                    rates: fixed_ladder(rate, m),
                    coding: Coding::FixedLength,
                }
            }
            Coding::VariableLength => {
                if p.rate.is_some() || p.m_sweep.is_some() {
                    return Err(Error::config("variable-length coding takes protocol.rates only"));
                }
                let rates: Vec<f64> = p
                    .rates
                    .as_ref()
                    .ok_or_else(|| Error::config("protocol.rates is required"))?
                    .iter()
                    .map(|&r| p.rate_unit.to_nats(r))
                    .collect();
                if let Some(m) = p.m_max {
                    if m + 1 != rates.len() {
                        return Err(Error::config(format!(
                            "protocol.m_max = {m} but {} rates given",
                            rates.len()
                        )));
                    }
                }
                ProtocolConfig::variable_length(p.kind, rates)
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn powers_for(&self, snr_db: f64, ch: &ChannelParams, m_max: usize) -> Result<PowerAllocation> {
        let offsets = |v: &Option<Vec<f64>>, name: &str| -> Result<Vec<f64>> {
            match v {
                None => Ok(vec![0.0; m_max + 1]),
                Some(v) if v.len() == m_max + 1 => Ok(v.clone()),
                Some(v) => Err(Error::config(format!(
                    "powers.{name} has {} entries, expected {}",
                    v.len(),
                    m_max + 1
                ))),
            }
        };
        let s = offsets(&self.powers.source_offsets_db, "source_offsets_db")?;
        let r = offsets(&self.powers.relay_offsets_db, "relay_offsets_db")?;
        let source = s.iter().map(|o| db(snr_db + o)).collect();
        let mut relay: Vec<f64> = r.iter().map(|o| db(snr_db + o)).collect();
        relay[0] = 0.0;
        if ch.relay_absent() {
            relay.iter_mut().for_each(|p| *p = 0.0);
        }
        let pw = PowerAllocation::new(source, relay);
        pw.validate(m_max)?;
        Ok(pw)
    }

    /// Sweep points in output order: SNR outermost, then `delta`, then `M`,
    /// then outage caps when `with_caps` is set.
    pub fn points(&self, with_caps: bool) -> Result<Vec<Point>> {
        if self.powers.snr_db.is_empty() {
            return Err(Error::config("powers.snr_db is empty"));
        }
        let deltas = match &self.channel.delta_sweep {
            Some(d) if d.is_empty() => return Err(Error::config("channel.delta_sweep is empty")),
            Some(d) => d.clone(),
            None => vec![self.channel.delta],
        };
        let ms: Vec<Option<usize>> = match &self.protocol.m_sweep {
            Some(m) if m.is_empty() => return Err(Error::config("protocol.m_sweep is empty")),
            Some(m) => m.iter().map(|&m| Some(m)).collect(),
            None => vec![None],
        };
        let caps: Vec<Option<f64>> = match self.opt.outage_caps.as_ref().filter(|_| with_caps) {
            Some(c) if c.is_empty() => return Err(Error::config("opt.outage_caps is empty")),
            Some(c) => c.iter().map(|&c| Some(c)).collect(),
            None => vec![None],
        };
        let mut out = Vec::new();
        for &snr in &self.powers.snr_db {
            if !snr.is_finite() {
                return Err(Error::config(format!("bad SNR {snr}")));
            }
            for &d in &deltas {
                let ch = self.base_channel().with_delta(d);
                ch.validate()?;
                for &m in &ms {
                    let protocol = self.protocol_for(m)?;
                    let powers = self.powers_for(snr, &ch, protocol.m_max)?;
                    for &cap in &caps {
                        out.push(Point {
                            snr_db: snr,
                            channel: ch,
                            protocol: protocol.clone(),
                            powers: powers.clone(),
                            outage_cap: cap,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn problem(&self, pt: &Point) -> OptProblem {
        let phi = db(pt.snr_db);
        let scenario = match self.opt.scenario {
            ScenarioKind::SumPower => Scenario::SumPower { phi_total: phi },
            ScenarioKind::Individual => Scenario::Individual {
                phi_s: phi,
                phi_r: phi * db(self.opt.relay_offset_db),
            },
        };
        let mut p = OptProblem::new(pt.channel, pt.protocol.clone(), self.opt.objective, scenario);
        p.free_rates = self.opt.free_rates;
        p.rate_bounds = self.opt.rate_bounds;
        p.grid = self.opt.grid;
        p.inr_mode = self.protocol.inr_mode;
        p.feedback = self.feedback;
        p.outage_cap = pt.outage_cap;
        p.starts = self.opt.starts;
        p.max_iters = self.opt.max_iters;
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> std::result::Result<Config, serde_json::Error> {
        serde_json::from_str(s)
    }

    const MINIMAL: &str = r#"{
        "channel": {"lambda_sr": 0.5, "lambda_sd": 1.0, "lambda_rd": 0.5},
        "protocol": {"kind": "rtd", "m_max": 1, "rate": 1.0},
        "powers": {"snr_db": [0, 5]}
    }"#;

    #[test]
    fn minimal_config() {
        let c = parse(MINIMAL).unwrap();
        let pts = c.points(false).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].powers.source, vec![db(5.0); 2]);
        assert_eq!(pts[1].powers.relay[0], 0.0);
        assert_eq!(pts[0].protocol.rates, vec![1.0, 0.5]);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = MINIMAL.replace("\"lambda_rd\"", "\"lamda_rd\"");
        let e = parse(&bad).unwrap_err();
        assert!(e.to_string().contains("lamda_rd"), "{e}");
        assert!(e.line() > 0);
    }

    #[test]
    fn missing_relay_means_single_user() {
        let c = parse(
            r#"{"channel": {"lambda_sd": 1.0}, "protocol": {"kind": "inr", "m_max": 1, "rate": 1.0},
                "powers": {"snr_db": [5]}}"#,
        )
        .unwrap();
        let p = &c.points(false).unwrap()[0];
        assert!(p.channel.relay_absent());
        assert_eq!(p.powers.relay, vec![0.0, 0.0]);
    }

    #[test]
    fn sweep_order() {
        let c = parse(
            r#"{"channel": {"lambda_sr": 1.0, "lambda_sd": 1.0, "lambda_rd": 0.2, "delta_sweep": [0, 0.5]},
                "protocol": {"kind": "rtd", "rate": 0.5, "m_sweep": [0, 1, 2]},
                "powers": {"snr_db": [1, 2]}}"#,
        )
        .unwrap();
        let pts = c.points(false).unwrap();
        assert_eq!(pts.len(), 12);
        assert_eq!(
            (pts[0].snr_db, pts[0].channel.delta, pts[0].protocol.m_max),
            (1.0, 0.0, 0)
        );
        assert_eq!(
            (pts[5].snr_db, pts[5].channel.delta, pts[5].protocol.m_max),
            (1.0, 0.5, 2)
        );
        assert_eq!(pts[6].snr_db, 2.0);
    }

    #[test]
    fn inconsistent_protocol() {
        let c = parse(
            r#"{"channel": {"lambda_sd": 1.0}, "protocol": {"kind": "inr", "coding": "variable_length", "m_max": 2, "rates": [1.0, 0.5]},
                "powers": {"snr_db": [5]}}"#,
        )
        .unwrap();
        assert!(matches!(c.points(false), Err(Error::Config(_))));
    }

    #[test]
    fn bit_rates_converted() {
        let c = parse(&MINIMAL.replace("\"rate\": 1.0", "\"rate\": 1.0, \"rate_unit\": \"bits\"")).unwrap();
        let r = &c.points(false).unwrap()[0].protocol.rates;
        assert!((r[0] - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn caps_only_expand_optimization_points() {
        let c = parse(&MINIMAL.replace("\"powers\"", "\"opt\": {\"outage_caps\": [0.1, 0.01]}, \"powers\"")).unwrap();
        assert_eq!(c.points(false).unwrap().len(), 2);
        let pts = c.points(true).unwrap();
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[1].outage_cap, Some(0.01));
    }
}
