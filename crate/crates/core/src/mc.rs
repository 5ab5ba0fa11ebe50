//! Packet-level Monte Carlo simulation of the relay-ARQ handshake.
//!
//! Each packet runs the three-party state machine round by round: the
//! destination is checked first, then the relay; feedback bits are flipped
//! independently with the configured probabilities. Packets are split into
//! fixed batches, batch `b` draws from ChaCha8 stream `b`, and batch results
//! are merged in batch order, so the output depends on the seed only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    ChannelParams, Coding, EventProbabilities, FadingMode, FeedbackNoise, Metrics, PowerAllocation, Protocol,
    ProtocolConfig,
};

/// Packets per RNG stream.
const BATCH: u64 = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_packets: u64,
    pub seed: u64,
    /// Pair every packet with one driven by `1 - U` for each uniform `U`.
    #[serde(default)]
    pub antithetic: bool,
}

impl McConfig {
    pub fn new(n_packets: u64, seed: u64) -> Self {
        McConfig {
            n_packets,
            seed,
            antithetic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_packets == 0 {
            return Err(Error::invalid("n_packets must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MetricErrors {
    pub throughput: f64,
    pub outage: f64,
    pub phi_s: f64,
    pub phi_r: f64,
    pub phi_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McResult {
    pub metrics: Metrics,
    pub std_errors: MetricErrors,
    /// Empirical event frequencies: decoding round, last source round and
    /// relay span of every packet.
    pub event_freqs: EventProbabilities,
    pub n_packets: u64,
    /// Total power recomputed from per-round transmission counts.
    pub tally_phi_total: f64,
    /// Some packet had the source and the relay transmit in the same round
    /// under INR; their mutual informations were added.
    pub inr_overlap_extension: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Complex {
    re: f64,
    im: f64,
}

impl Complex {
    fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    fn scale(self, k: f64) -> Complex {
        Complex {
            re: self.re * k,
            im: self.im * k,
        }
    }

    fn add(self, o: Complex) -> Complex {
        Complex {
            re: self.re + o.re,
            im: self.im + o.im,
        }
    }
}

/// Complex channel coefficients of one fading block; `|h|^2` are the gains.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LinkDraw {
    h_sr: Complex,
    h_sd: Complex,
    h_rd: Complex,
}

impl LinkDraw {
    pub fn g_sr(&self) -> f64 {
        self.h_sr.norm_sqr()
    }

    pub fn g_sd(&self) -> f64 {
        self.h_sd.norm_sqr()
    }

    pub fn g_rd(&self) -> f64 {
        self.h_rd.norm_sqr()
    }

    /// Gain of the coherent sum `h_sd sqrt(ps) + h_rd sqrt(pr)`.
    fn joint_snr(&self, ps: f64, pr: f64) -> f64 {
        self.h_sd.scale(ps.sqrt()).add(self.h_rd.scale(pr.sqrt())).norm_sqr()
    }
}

/// Uniforms in (0, 1), optionally mirrored from a recorded sequence.
pub struct Uniforms<'a> {
    rng: &'a mut ChaCha8Rng,
    tape: &'a mut Vec<f64>,
    mode: TapeMode,
    pos: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TapeMode {
    Off,
    Record,
    Mirror,
}

impl<'a> Uniforms<'a> {
    fn new(rng: &'a mut ChaCha8Rng, tape: &'a mut Vec<f64>, mode: TapeMode) -> Self {
        if mode == TapeMode::Record {
            tape.clear();
        }
        Uniforms {
            rng,
            tape,
            mode,
            pos: 0,
        }
    }

    fn fresh(&mut self) -> f64 {
        // midpoint of a 2^-53 cell: never 0 or 1, and 1 - u is exact
        ((self.rng.random::<u64>() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn draw(&mut self) -> f64 {
        match self.mode {
            TapeMode::Off => self.fresh(),
            TapeMode::Record => {
                let u = self.fresh();
                self.tape.push(u);
                u
            }
            TapeMode::Mirror => {
                let u = match self.tape.get(self.pos) {
                    Some(&u) => 1.0 - u,
                    None => self.fresh(),
                };
                self.pos += 1;
                u
            }
        }
    }

    /// `CN(0, 1/lambda)`; zero for an absent link.
    fn gaussian(&mut self, lambda: f64) -> Complex {
        let u = self.draw();
        let v = self.draw();
        if lambda.is_infinite() {
            return Complex::default();
        }
        let r = (-u.ln() / lambda).sqrt();
        let (s, c) = (std::f64::consts::TAU * v).sin_cos();
        Complex { re: r * c, im: r * s }
    }
}

/// One fading block. With `delta > 0` the source-destination coefficient is
/// `δ sqrt(λsr/λsd) h_sr + sqrt(1-δ²) ς`, which keeps its mean gain `1/λsd`.
pub fn sample_fading(ch: &ChannelParams, u: &mut Uniforms<'_>) -> LinkDraw {
    let h_sr = u.gaussian(ch.lambda_sr);
    let own = u.gaussian(ch.lambda_sd);
    let h_rd = u.gaussian(ch.lambda_rd);
    let d = ch.delta;
    let h_sd = if d > 0.0 && ch.lambda_sr.is_finite() {
        h_sr.scale(d * (ch.lambda_sr / ch.lambda_sd).sqrt())
            .add(own.scale((1.0 - d * d).max(0.0).sqrt()))
    } else {
        own
    };
    LinkDraw { h_sr, h_sd, h_rd }
}

/// What happened to one packet.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PacketOutcome {
    pub decoded_round: Option<usize>,
    /// Last round in which the source transmitted.
    pub source_last: usize,
    /// Round the relay decoded in and its last transmitting round, if it transmitted.
    pub relay_span: Option<(usize, usize)>,
    pub time: f64,
    pub source_time: f64,
    pub relay_time: f64,
    pub source_energy: f64,
    pub relay_energy: f64,
    /// Per round: (source transmitted, relay transmitted).
    pub active: Vec<(bool, bool)>,
    pub inr_overlap: bool,
}

struct Simulator<'a> {
    ch: &'a ChannelParams,
    cfg: &'a ProtocolConfig,
    pw: &'a PowerAllocation,
    fb: &'a FeedbackNoise,
    w: Vec<f64>,
    rate: f64,
}

impl Simulator<'_> {
    fn decoded(&self, acc: f64) -> bool {
        match self.cfg.protocol {
            // repetition with maximum ratio combining
            Protocol::Rtd => acc.ln_1p() >= self.rate,
            // normalized accumulated mutual information
            Protocol::Inr => acc >= 1.0,
        }
    }

    fn packet(&self, u: &mut Uniforms<'_>) -> PacketOutcome {
        let k = self.cfg.rounds();
        let fast = self.ch.fading == FadingMode::FastFading;
        let inr = self.cfg.protocol == Protocol::Inr;
        let mut out = PacketOutcome {
            active: Vec::with_capacity(k),
            ..PacketOutcome::default()
        };
        let mut draw = sample_fading(self.ch, u);
        let mut dest_acc = 0.0;
        let mut relay_acc = 0.0;
        let mut relay_decoded: Option<usize> = None;
        let mut source_on = true;
        let mut relay_listening = true;

        for m in 1..=k {
            let relay_on = relay_listening && relay_decoded.is_some_and(|n| n < m);
            if !source_on && !relay_on {
                break;
            }
            if fast && m > 1 {
                draw = sample_fading(self.ch, u);
            }
            let ps = if source_on { self.pw.source[m - 1] } else { 0.0 };
            let pr = if relay_on { self.pw.relay[m - 1] } else { 0.0 };
            let w = self.w[m - 1];
            out.time += w;
            out.active.push((source_on, relay_on));
            if source_on {
                out.source_last = m;
                out.source_time += w;
                out.source_energy += ps * w;
            }
            if relay_on {
                if let Some(n) = relay_decoded {
                    out.relay_span = Some((n, m));
                }
                out.relay_time += w;
                out.relay_energy += pr * w;
            }

            if out.decoded_round.is_none() {
                dest_acc += match (inr, source_on, relay_on) {
                    (false, true, true) => draw.joint_snr(ps, pr),
                    (false, true, false) => draw.g_sd() * ps,
                    (false, false, _) => draw.g_rd() * pr,
                    (true, s, r) => {
                        let from_s = if s { (draw.g_sd() * ps).ln_1p() } else { 0.0 };
                        let from_r = if r { (draw.g_rd() * pr).ln_1p() } else { 0.0 };
                        out.inr_overlap |= s && r;
                        w * (from_s + from_r)
                    }
                };
                if self.decoded(dest_acc) {
                    out.decoded_round = Some(m);
                }
            }
            if relay_decoded.is_none() && source_on {
                relay_acc += if inr {
                    w * (draw.g_sr() * ps).ln_1p()
                } else {
                    draw.g_sr() * ps
                };
                if self.decoded(relay_acc) {
                    relay_decoded = Some(m);
                }
            }

            // feedback at the end of the round; the flips are drawn every
            // round so the uniform stream does not depend on the outcome
            let ack = out.decoded_round.is_some();
            let flip_s = u.draw() < self.fb.p_sd;
            let flip_r = u.draw() < self.fb.p_rd;
            let flip_rs = u.draw() < self.fb.p_sr;
            if m == k {
                break;
            }
            if source_on && (ack ^ flip_s) {
                source_on = false;
            }
            if relay_listening && (ack ^ flip_r) {
                relay_listening = false;
            }
            // a relay still serving the destination reports its own state
            if source_on && relay_listening && (relay_decoded.is_some() ^ flip_rs) {
                source_on = false;
            }
        }
        out
    }
}

/// Sums for a ratio estimator `Σa / Σb` over independent units.
#[derive(Debug, Clone, Copy, Default)]
struct Ratio {
    sa: f64,
    sb: f64,
    saa: f64,
    sbb: f64,
    sab: f64,
}

impl Ratio {
    fn add(&mut self, a: f64, b: f64) {
        self.sa += a;
        self.sb += b;
        self.saa += a * a;
        self.sbb += b * b;
        self.sab += a * b;
    }

    fn merge(&mut self, o: &Ratio) {
        self.sa += o.sa;
        self.sb += o.sb;
        self.saa += o.saa;
        self.sbb += o.sbb;
        self.sab += o.sab;
    }

    /// Ratio and its delta-method standard error; `None` when `Σb = 0`.
    fn estimate(&self, units: f64) -> Option<(f64, f64)> {
        if self.sb <= 0.0 {
            return None;
        }
        let r = self.sa / self.sb;
        let (ma, mb) = (self.sa / units, self.sb / units);
        let va = self.saa / units - ma * ma;
        let vb = self.sbb / units - mb * mb;
        let cab = self.sab / units - ma * mb;
        let var = (va - 2.0 * r * cab + r * r * vb) / (units * mb * mb);
        Some((r, var.max(0.0).sqrt()))
    }
}

#[derive(Debug, Clone)]
struct Tally {
    units: u64,
    packets: u64,
    success: Ratio,
    throughput: Ratio,
    phi_s: Ratio,
    phi_r: Ratio,
    phi_total: Ratio,
    a: Vec<u64>,
    s: Vec<u64>,
    b: Vec<Vec<u64>>,
    source_rounds: Vec<u64>,
    relay_rounds: Vec<u64>,
    any_rounds: Vec<u64>,
    inr_overlap: bool,
}

#[derive(Default)]
struct Unit {
    packets: f64,
    success: f64,
    time: f64,
    source_time: f64,
    relay_time: f64,
    source_energy: f64,
    relay_energy: f64,
}

impl Tally {
    fn new(k: usize) -> Self {
        Tally {
            units: 0,
            packets: 0,
            success: Ratio::default(),
            throughput: Ratio::default(),
            phi_s: Ratio::default(),
            phi_r: Ratio::default(),
            phi_total: Ratio::default(),
            a: vec![0; k],
            s: vec![0; k],
            b: vec![vec![0; k]; k],
            source_rounds: vec![0; k],
            relay_rounds: vec![0; k],
            any_rounds: vec![0; k],
            inr_overlap: false,
        }
    }

    fn record(&mut self, unit: &mut Unit, p: &PacketOutcome) {
        self.packets += 1;
        if let Some(m) = p.decoded_round {
            self.a[m - 1] += 1;
            unit.success += 1.0;
        }
        self.s[p.source_last - 1] += 1;
        if let Some((n, m)) = p.relay_span {
            self.b[n - 1][m - 1] += 1;
        }
        for (i, &(s, r)) in p.active.iter().enumerate() {
            self.source_rounds[i] += u64::from(s);
            self.relay_rounds[i] += u64::from(r);
            self.any_rounds[i] += u64::from(s || r);
        }
        self.inr_overlap |= p.inr_overlap;
        unit.packets += 1.0;
        unit.time += p.time;
        unit.source_time += p.source_time;
        unit.relay_time += p.relay_time;
        unit.source_energy += p.source_energy;
        unit.relay_energy += p.relay_energy;
    }

    fn close(&mut self, u: Unit) {
        self.units += 1;
        self.success.add(u.success, u.packets);
        self.throughput.add(u.success, u.time);
        self.phi_s.add(u.source_energy, u.source_time);
        self.phi_r.add(u.relay_energy, u.relay_time);
        self.phi_total.add(u.source_energy + u.relay_energy, u.time);
    }

    fn merge(&mut self, o: &Tally) {
        self.units += o.units;
        self.packets += o.packets;
        self.success.merge(&o.success);
        self.throughput.merge(&o.throughput);
        self.phi_s.merge(&o.phi_s);
        self.phi_r.merge(&o.phi_r);
        self.phi_total.merge(&o.phi_total);
        for (x, y) in self
            .a
            .iter_mut()
            .zip(&o.a)
            .chain(self.s.iter_mut().zip(&o.s))
            .chain(self.source_rounds.iter_mut().zip(&o.source_rounds))
            .chain(self.relay_rounds.iter_mut().zip(&o.relay_rounds))
            .chain(self.any_rounds.iter_mut().zip(&o.any_rounds))
        {
            *x += y;
        }
        for (row, orow) in self.b.iter_mut().zip(&o.b) {
            for (x, y) in row.iter_mut().zip(orow) {
                *x += y;
            }
        }
        self.inr_overlap |= o.inr_overlap;
    }
}

fn check(
    ch: &ChannelParams,
    cfg: &ProtocolConfig,
    pw: &PowerAllocation,
    fb: &FeedbackNoise,
    mc: &McConfig,
) -> Result<()> {
    ch.validate()?;
    cfg.validate()?;
    pw.validate(cfg.m_max)?;
    fb.validate()?;
    mc.validate()?;
    if cfg.protocol == Protocol::Rtd && cfg.coding != Coding::FixedLength {
        return Err(Error::config("RTD repeats one codeword and needs fixed-length coding"));
    }
    Ok(())
}

fn run_batch(sim: &Simulator<'_>, mc: &McConfig, batch: u64) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
    rng.set_stream(batch);
    let start = batch * BATCH;
    let end = (start + BATCH).min(mc.n_packets);
    let mut tally = Tally::new(sim.cfg.rounds());
    let mut tape = Vec::new();
    let mut i = start;
    while i < end {
        let mut unit = Unit::default();
        if mc.antithetic && i + 1 < end {
            let p = sim.packet(&mut Uniforms::new(&mut rng, &mut tape, TapeMode::Record));
            tally.record(&mut unit, &p);
            let q = sim.packet(&mut Uniforms::new(&mut rng, &mut tape, TapeMode::Mirror));
            tally.record(&mut unit, &q);
            i += 2;
        } else {
            let p = sim.packet(&mut Uniforms::new(&mut rng, &mut tape, TapeMode::Off));
            tally.record(&mut unit, &p);
            i += 1;
        }
        tally.close(unit);
    }
    tally
}

/// Simulate `mc.n_packets` packets and estimate every metric.
pub fn simulate(
    ch: &ChannelParams,
    cfg: &ProtocolConfig,
    pw: &PowerAllocation,
    fb: &FeedbackNoise,
    mc: &McConfig,
) -> Result<McResult> {
    check(ch, cfg, pw, fb, mc)?;
    let sim = Simulator {
        ch,
        cfg,
        pw,
        fb,
        w: cfg.increments(),
        rate: cfg.initial_rate(),
    };
    let batches = mc.n_packets.div_ceil(BATCH);
    let parts: Vec<Tally> = (0..batches).into_par_iter().map(|b| run_batch(&sim, mc, b)).collect();
    let k = cfg.rounds();
    let mut total = Tally::new(k);
    for t in &parts {
        total.merge(t);
    }
    summarize(&total, cfg, pw)
}

fn summarize(t: &Tally, cfg: &ProtocolConfig, pw: &PowerAllocation) -> Result<McResult> {
    let units = t.units as f64;
    let n = t.packets as f64;
    let (success, success_se) = t.success.estimate(units).unwrap_or((0.0, 0.0));
    let (throughput, throughput_se) = t.throughput.estimate(units).unwrap_or((0.0, 0.0));
    let (phi_s, phi_s_se) = t
        .phi_s
        .estimate(units)
        .ok_or_else(|| Error::Degenerate("the source never transmitted".into()))?;
    let relay = t.phi_r.estimate(units);
    let (phi_r, phi_r_se) = relay.unwrap_or((0.0, 0.0));
    let (phi_total, phi_total_se) = t.phi_total.estimate(units).unwrap_or((0.0, 0.0));

    let w = cfg.increments();
    let k = cfg.rounds();
    let mut energy = 0.0;
    let mut time = 0.0;
    for (m, &wm) in w.iter().enumerate().take(k) {
        energy += wm * (t.source_rounds[m] as f64 * pw.source[m] + t.relay_rounds[m] as f64 * pw.relay[m]);
        time += wm * t.any_rounds[m] as f64;
    }

    let mut ev = EventProbabilities::zeros(cfg.m_max);
    for m in 0..k {
        ev.a[m] = t.a[m] as f64 / n;
        ev.s[m] = t.s[m] as f64 / n;
        for j in 0..k {
            ev.b[m][j] = t.b[m][j] as f64 / n;
        }
    }
    Ok(McResult {
        metrics: Metrics {
            throughput,
            outage: 1.0 - success,
            phi_s,
            phi_r,
            phi_total,
            relay_active: relay.is_some(),
        },
        std_errors: MetricErrors {
            throughput: throughput_se,
            outage: success_se,
            phi_s: phi_s_se,
            phi_r: phi_r_se,
            phi_total: phi_total_se,
        },
        event_freqs: ev,
        n_packets: t.packets,
        tally_phi_total: if time > 0.0 { energy / time } else { 0.0 },
        inr_overlap_extension: t.inr_overlap,
    })
}
