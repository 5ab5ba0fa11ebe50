//! Throughput, outage and average powers from event probabilities.
//!
//! Everything is normalized by the packet size, so round `m` costs
//! `w_m = 1/R_(m) - 1/R_(m-1)` channel uses per nat.

use crate::error::{Error, Result};
use crate::types::{EventProbabilities, Metrics, PowerAllocation, ProtocolConfig};

pub fn outage(ev: &EventProbabilities) -> f64 {
    (1.0 - ev.sum_a()).clamp(0.0, 1.0)
}

/// Expected packet duration per information nat.
pub fn expected_duration(ev: &EventProbabilities, cfg: &ProtocolConfig) -> f64 {
    let k = cfg.rounds();
    let decoded: f64 = ev.a.iter().zip(&cfg.rates).map(|(a, r)| a / r).sum();
    decoded + outage(ev) / cfg.rate(k)
}

pub fn throughput(ev: &EventProbabilities, cfg: &ProtocolConfig) -> f64 {
    let success = ev.sum_a();
    if success <= 0.0 {
        return 0.0;
    }
    success / expected_duration(ev, cfg)
}

fn cumulative(powers: &[f64], w: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    powers
        .iter()
        .zip(w)
        .map(|(p, w)| {
            acc += p * w;
            acc
        })
        .collect()
}

/// Expected source energy and activation time (per nat).
pub fn source_energy_time(ev: &EventProbabilities, cfg: &ProtocolConfig, pw: &PowerAllocation) -> (f64, f64) {
    let w = cfg.increments();
    let e = cumulative(&pw.source, &w);
    let mut energy = 0.0;
    let mut time = 0.0;
    for (m, s) in ev.s.iter().enumerate() {
        energy += s * e[m];
        time += s / cfg.rates[m];
    }
    (energy, time)
}

/// Expected relay energy and activation time (per nat).
pub fn relay_energy_time(ev: &EventProbabilities, cfg: &ProtocolConfig, pw: &PowerAllocation) -> (f64, f64) {
    let w = cfg.increments();
    let e = cumulative(&pw.relay, &w);
    let mut energy = 0.0;
    let mut time = 0.0;
    for (n, m, b) in ev.spans() {
        energy += b * (e[m - 1] - e[n - 1]);
        time += b * (1.0 / cfg.rate(m) - 1.0 / cfg.rate(n));
    }
    (energy, time)
}

/// Source power averaged over the channel uses in which it is active.
pub fn phi_source(ev: &EventProbabilities, cfg: &ProtocolConfig, pw: &PowerAllocation) -> Result<f64> {
    let (energy, time) = source_energy_time(ev, cfg, pw);
    if ev.sum_s() <= 0.0 || time <= 0.0 {
        return Err(Error::Degenerate("stop probabilities are all zero".into()));
    }
    Ok(energy / time)
}

/// Relay power averaged over its active channel uses, `None` if it is never active.
pub fn phi_relay(ev: &EventProbabilities, cfg: &ProtocolConfig, pw: &PowerAllocation) -> Option<f64> {
    let (energy, time) = relay_energy_time(ev, cfg, pw);
    if time > f64::MIN_POSITIVE {
        Some(energy / time)
    } else {
        None
    }
}

/// Total energy of both terminals over the packet duration.
pub fn phi_total(ev: &EventProbabilities, cfg: &ProtocolConfig, pw: &PowerAllocation) -> f64 {
    let (es, _) = source_energy_time(ev, cfg, pw);
    let (er, _) = relay_energy_time(ev, cfg, pw);
    (es + er) / expected_duration(ev, cfg)
}

pub fn assemble(ev: &EventProbabilities, cfg: &ProtocolConfig, pw: &PowerAllocation) -> Result<Metrics> {
    let phi_s = phi_source(ev, cfg, pw)?;
    let phi_r = phi_relay(ev, cfg, pw);
    Ok(Metrics {
        throughput: throughput(ev, cfg),
        outage: outage(ev),
        phi_s,
        phi_r: phi_r.unwrap_or(0.0),
        phi_total: phi_total(ev, cfg, pw),
        relay_active: phi_r.is_some(),
    })
}
