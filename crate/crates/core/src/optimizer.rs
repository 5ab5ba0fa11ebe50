//! Power and rate allocation by exhaustive grid search plus Nelder-Mead polish.
//!
//! A candidate is a vector of per-round power offsets in dB (and, with free
//! rates, the rate ladder). Every average power is a weighted mean of the
//! per-round powers, so the scale that puts a candidate on the constraint
//! boundary exists and is found by a bracketed root search; the offsets only
//! choose the shape. `P^s_1` is the 0 dB reference, and in the individual
//! power scenario `P^r_2` is the relay's reference as well.

use std::sync::atomic::{AtomicU64, Ordering};

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlated::CorrelatedChannel;
use crate::engine::{evaluate_with, EngineKind};
use crate::error::{Error, Result};
use crate::inr::InrMode;
use crate::types::{fixed_ladder, ChannelParams, Coding, FeedbackNoise, Metrics, PowerAllocation, ProtocolConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    MaxThroughput,
    MinOutage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// `Φ^total <= phi_total`.
    SumPower { phi_total: f64 },
    /// `Φ^s <= phi_s` and `Φ^r <= phi_r`.
    Individual { phi_s: f64, phi_r: f64 },
}

impl Scenario {
    /// The source-side power level, used by the no-ARQ coverage baseline.
    pub fn source_level(&self) -> f64 {
        match *self {
            Scenario::SumPower { phi_total } => phi_total,
            Scenario::Individual { phi_s, .. } => phi_s,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        let fine = match *self {
            Scenario::SumPower { phi_total } => ok(phi_total),
            Scenario::Individual { phi_s, phi_r } => ok(phi_s) && ok(phi_r),
        };
        if fine {
            Ok(())
        } else {
            Err(Error::invalid(format!("power constraints must be positive: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub step_db: f64,
    /// Offsets range over `[-span_db, span_db]`.
    pub span_db: f64,
    /// Upper bound on grid size; the dB step is coarsened to respect it.
    pub max_points: usize,
    /// Points per rate dimension when rates are free.
    pub rate_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            step_db: 0.5,
            span_db: 20.0,
            max_points: 250_000,
            rate_points: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptProblem {
    pub channel: ChannelParams,
    /// Protocol and, unless `free_rates`, the rate ladder.
    pub protocol: ProtocolConfig,
    pub objective: Objective,
    pub scenario: Scenario,
    pub free_rates: bool,
    /// Search range of the initial rate `R_(1)` when rates are free.
    pub rate_bounds: (f64, f64),
    pub grid: GridSpec,
    pub inr_mode: InrMode,
    pub feedback: FeedbackNoise,
    /// Reject candidates whose outage exceeds this.
    pub outage_cap: Option<f64>,
    /// Local polish starts: the grid optimum, the uniform point, then Halton points.
    pub starts: usize,
    pub max_iters: u64,
}

impl OptProblem {
    pub fn new(channel: ChannelParams, protocol: ProtocolConfig, objective: Objective, scenario: Scenario) -> Self {
        OptProblem {
            channel,
            protocol,
            objective,
            scenario,
            free_rates: false,
            rate_bounds: (0.05, 5.0),
            grid: GridSpec::default(),
            inr_mode: InrMode::Exact2D,
            feedback: FeedbackNoise::noiseless(),
            outage_cap: None,
            starts: 8,
            max_iters: 400,
        }
    }

    fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.protocol.validate()?;
        self.scenario.validate()?;
        self.feedback.validate()?;
        let g = &self.grid;
        if !(g.step_db > 0.0 && g.span_db > 0.0 && g.span_db.is_finite()) {
            return Err(Error::config("grid step and span must be positive"));
        }
        if g.max_points < 2 || (self.free_rates && g.rate_points < 2) {
            return Err(Error::config("the grid needs at least 2 points per dimension"));
        }
        let (lo, hi) = self.rate_bounds;
        if self.free_rates && !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::config(format!("bad rate bounds ({lo}, {hi})")));
        }
        if let Some(cap) = self.outage_cap {
            if !(0.0..=1.0).contains(&cap) {
                return Err(Error::config(format!("outage cap {cap} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartTrace {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    /// Minimized internal objective: `-throughput` or `log10(outage)`.
    pub cost: f64,
    pub iterations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptTrace {
    pub evaluations: u64,
    pub grid_points: usize,
    pub grid_step_db: f64,
    pub starts: Vec<StartTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptResult {
    pub powers: PowerAllocation,
    pub rates: Vec<f64>,
    /// Throughput or outage, per the objective.
    pub best_value: f64,
    pub metrics: Metrics,
    pub engine: EngineKind,
    pub trace: OptTrace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Dim {
    SourceDb(usize),
    RelayDb(usize),
    Rate,
    /// log10 of the length of round `m` relative to round 1.
    LogLength(usize),
}

#[derive(Debug, Clone)]
struct Candidate {
    x: Vec<f64>,
    cost: f64,
    metrics: Metrics,
    powers: PowerAllocation,
    cfg: ProtocolConfig,
}

/// Tie tolerance on the internal cost.
const TIE: f64 = 1e-12;
const INFEASIBLE: f64 = 1e300;

fn better(a: &Candidate, b: &Candidate) -> bool {
    let tol = TIE * a.cost.abs().max(b.cost.abs()).max(1.0);
    if a.cost < b.cost - tol {
        return true;
    }
    if a.cost > b.cost + tol {
        return false;
    }
    let (ta, tb) = (a.metrics.phi_total, b.metrics.phi_total);
    if ta != tb {
        return ta < tb;
    }
    a.powers.source[0] < b.powers.source[0]
}

struct Search<'a> {
    p: &'a OptProblem,
    engine: EngineKind,
    dims: Vec<Dim>,
    relay_fixed_zero: bool,
    evaluations: AtomicU64,
}

impl Search<'_> {
    fn bounds(&self, d: Dim) -> (f64, f64) {
        match d {
            Dim::SourceDb(_) | Dim::RelayDb(_) => (-self.p.grid.span_db, self.p.grid.span_db),
            Dim::Rate => self.p.rate_bounds,
            Dim::LogLength(_) => (-1.0, 1.0),
        }
    }

    fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.dims)
            .map(|(&v, &d)| {
                let (lo, hi) = self.bounds(d);
                if v.is_nan() {
                    0.5 * (lo + hi)
                } else {
                    v.clamp(lo, hi)
                }
            })
            .collect()
    }

    fn uniform_point(&self) -> Vec<f64> {
        self.dims
            .iter()
            .map(|&d| match d {
                Dim::Rate => {
                    let (lo, hi) = self.p.rate_bounds;
                    self.p.protocol.initial_rate().clamp(lo, hi)
                }
                _ => 0.0,
            })
            .collect()
    }

    /// Protocol and unscaled power shape of a decision vector.
    fn decode(&self, x: &[f64]) -> Result<(ProtocolConfig, PowerAllocation)> {
        let m = self.p.protocol.m_max;
        let mut src = vec![1.0; m + 1];
        let mut rel = vec![if self.relay_fixed_zero { 0.0 } else { 1.0 }; m + 1];
        rel[0] = 0.0;
        let mut cfg = self.p.protocol.clone();
        let mut r1 = cfg.initial_rate();
        let mut lengths = vec![1.0; m + 1];
        for (&v, &d) in x.iter().zip(&self.dims) {
            match d {
                Dim::SourceDb(i) => src[i] = 10f64.powf(v / 10.0),
                Dim::RelayDb(i) => rel[i] = 10f64.powf(v / 10.0),
                Dim::Rate => r1 = v,
                Dim::LogLength(i) => lengths[i] = 10f64.powf(v),
            }
        }
        if self.p.free_rates {
            cfg.rates = match cfg.coding {
                Coding::FixedLength => fixed_ladder(r1, m),
                Coding::VariableLength => {
                    let mut acc = 0.0;
                    lengths
                        .iter()
                        .map(|l| {
                            acc += l;
                            r1 / acc
                        })
                        .collect()
                }
            };
            cfg.validate()?;
        }
        Ok((cfg, PowerAllocation::new(src, rel)))
    }

    fn metrics(&self, cfg: &ProtocolConfig, pw: &PowerAllocation) -> Result<Metrics> {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        Ok(evaluate_with(self.engine, &self.p.channel, cfg, pw, &self.p.feedback)?.metrics)
    }

    /// Scale of `side` (source or relay powers of `shape`) that meets `target`
    /// for the average selected by `phi`.
    fn boundary_scale(
        &self,
        cfg: &ProtocolConfig,
        shape: &PowerAllocation,
        relay_side: bool,
        both: bool,
        target: f64,
        phi: impl Fn(&Metrics) -> f64,
    ) -> Result<f64> {
        let scaled = |k: f64| -> PowerAllocation {
            let mut pw = shape.clone();
            if both || !relay_side {
                pw.source.iter_mut().for_each(|p| *p *= k);
            }
            if both || relay_side {
                pw.relay.iter_mut().for_each(|p| *p *= k);
            }
            pw
        };
        let used: Vec<f64> = if both {
            shape.source.iter().chain(&shape.relay[1..]).copied().collect()
        } else if relay_side {
            shape.relay[1..].to_vec()
        } else {
            shape.source.clone()
        };
        let used: Vec<f64> = used.into_iter().filter(|&p| p > 0.0).collect();
        let max = used.iter().fold(0.0f64, |a, &b| a.max(b));
        let min = used.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let h = |t: f64| -> Result<f64> { Ok(phi(&self.metrics(cfg, &scaled(t.exp()))?) - target) };
        let tol = 1e-10 * target;

        let mut a = (target / max).ln();
        let mut b = (target / min).ln();
        let mut ha = h(a)?;
        let mut hb = h(b)?;
        if ha.abs() <= tol {
            return Ok(a.exp());
        }
        let mut widen = 0;
        while ha > 0.0 && widen < 60 {
            a -= std::f64::consts::LN_2;
            ha = h(a)?;
            widen += 1;
        }
        while hb < 0.0 && widen < 120 {
            b += std::f64::consts::LN_2;
            hb = h(b)?;
            widen += 1;
        }
        if ha > 0.0 || hb < 0.0 {
            return Err(Error::NoRoot(format!("no power scale meets the constraint {target}")));
        }
        // Illinois variant of regula falsi on log-scale
        let mut side = 0i8;
        for _ in 0..100 {
            if ha.abs() <= tol || b - a <= 1e-13 * a.abs().max(1.0) {
                break;
            }
            let t = if hb - ha > 0.0 {
                (a * hb - b * ha) / (hb - ha)
            } else {
                0.5 * (a + b)
            };
            let t = if t <= a || t >= b { 0.5 * (a + b) } else { t };
            let ht = h(t)?;
            if ht.abs() <= tol {
                return Ok(t.exp());
            }
            if ht < 0.0 {
                a = t;
                ha = ht;
                if side == -1 {
                    hb *= 0.5;
                }
                side = -1;
            } else {
                b = t;
                hb = ht;
                if side == 1 {
                    ha *= 0.5;
                }
                side = 1;
            }
        }
        // the feasible end of the bracket
        Ok(a.exp())
    }

    fn place(&self, cfg: &ProtocolConfig, shape: &PowerAllocation) -> Result<PowerAllocation> {
        let mut pw = shape.clone();
        match self.p.scenario {
            Scenario::SumPower { phi_total } => {
                let k = self.boundary_scale(cfg, &pw, false, true, phi_total, |m| m.phi_total)?;
                pw = pw.scaled(k);
            }
            Scenario::Individual { phi_s, phi_r } => {
                let k = self.boundary_scale(cfg, &pw, false, false, phi_s, |m| m.phi_s)?;
                pw.source.iter_mut().for_each(|p| *p *= k);
                if !self.relay_fixed_zero {
                    let k =
                        self.boundary_scale(
                            cfg,
                            &pw,
                            true,
                            false,
                            phi_r,
                            |m| {
                                if m.relay_active {
                                    m.phi_r
                                } else {
                                    0.0
                                }
                            },
                        )?;
                    pw.relay.iter_mut().for_each(|p| *p *= k);
                }
            }
        }
        Ok(pw)
    }

    fn feasible(&self, m: &Metrics) -> bool {
        let slack = 1.0 + 1e-6;
        let powers_ok = match self.p.scenario {
            Scenario::SumPower { phi_total } => m.phi_total <= phi_total * slack,
            Scenario::Individual { phi_s, phi_r } => {
                m.phi_s <= phi_s * slack && (!m.relay_active || m.phi_r <= phi_r * slack)
            }
        };
        powers_ok && self.p.outage_cap.is_none_or(|cap| m.outage <= cap)
    }

    fn cost(&self, m: &Metrics) -> f64 {
        match self.p.objective {
            Objective::MaxThroughput => -m.throughput,
            Objective::MinOutage => m.outage.max(1e-300).log10(),
        }
    }

    fn assess(&self, x: &[f64]) -> Option<Candidate> {
        let x = self.clamp(x);
        let (cfg, shape) = self.decode(&x).ok()?;
        let powers = self.place(&cfg, &shape).ok()?;
        let metrics = self.metrics(&cfg, &powers).ok()?;
        if !self.feasible(&metrics) {
            return None;
        }
        Some(Candidate {
            cost: self.cost(&metrics),
            x,
            metrics,
            powers,
            cfg,
        })
    }

    fn axes(&self) -> (Vec<Vec<f64>>, f64) {
        let g = &self.p.grid;
        let n_db = self
            .dims
            .iter()
            .filter(|d| matches!(d, Dim::SourceDb(_) | Dim::RelayDb(_)))
            .count();
        let other: usize = self
            .dims
            .iter()
            .map(|d| match d {
                Dim::Rate | Dim::LogLength(_) => g.rate_points,
                _ => 1,
            })
            .product();
        let mut step = g.step_db;
        let mut per = (2.0 * g.span_db / step).round() as usize + 1;
        if n_db > 0 {
            let budget = (g.max_points / other.max(1)).max(2) as f64;
            let cap = budget.powf(1.0 / n_db as f64).floor() as usize;
            if per > cap {
                // keep the count odd so 0 dB stays on the grid
                per = if cap.is_multiple_of(2) {
                    cap.saturating_sub(1)
                } else {
                    cap
                }
                .max(2);
                step = 2.0 * g.span_db / (per - 1) as f64;
            }
        }
        let axes = self
            .dims
            .iter()
            .map(|&d| {
                let (lo, hi) = self.bounds(d);
                let n = match d {
                    Dim::SourceDb(_) | Dim::RelayDb(_) => per,
                    _ => g.rate_points,
                };
                (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
            })
            .collect();
        (axes, step)
    }

    fn halton(&self, index: usize) -> Vec<f64> {
        const PRIMES: [usize; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
        self.dims
            .iter()
            .enumerate()
            .map(|(k, &d)| {
                let base = PRIMES[k % PRIMES.len()];
                let (mut f, mut r, mut i) = (1.0, 0.0, index);
                while i > 0 {
                    f /= base as f64;
                    r += f * (i % base) as f64;
                    i /= base;
                }
                let (lo, hi) = self.bounds(d);
                lo + (hi - lo) * r
            })
            .collect()
    }

    fn polish(&self, start: &[f64]) -> (Option<Candidate>, StartTrace) {
        let n = self.dims.len();
        let mut simplex = vec![start.to_vec()];
        for i in 0..n {
            let (lo, hi) = self.bounds(self.dims[i]);
            let step = match self.dims[i] {
                Dim::SourceDb(_) | Dim::RelayDb(_) => 2.0,
                _ => 0.1 * (hi - lo),
            };
            let mut v = start.to_vec();
            v[i] = if v[i] + step <= hi { v[i] + step } else { v[i] - step };
            simplex.push(v);
        }
        let cost = Cost { search: self };
        let run = NelderMead::new(simplex)
            .with_sd_tolerance(1e-10)
            .map_err(|e| e.to_string())
            .and_then(|nm| {
                Executor::new(cost, nm)
                    .configure(|s| s.max_iters(self.p.max_iters))
                    .run()
                    .map_err(|e| e.to_string())
            });
        match run {
            Ok(res) => {
                let state = res.state();
                let end = state.get_best_param().cloned().unwrap_or_else(|| start.to_vec());
                let iterations = state.get_iter();
                let cand = self.assess(&end);
                let trace = StartTrace {
                    start: start.to_vec(),
                    end: self.clamp(&end),
                    cost: cand.as_ref().map_or(INFEASIBLE, |c| c.cost),
                    iterations,
                };
                (cand, trace)
            }
            Err(_) => {
                let cand = self.assess(start);
                let trace = StartTrace {
                    start: start.to_vec(),
                    end: start.to_vec(),
                    cost: cand.as_ref().map_or(INFEASIBLE, |c| c.cost),
                    iterations: 0,
                };
                (cand, trace)
            }
        }
    }
}

struct Cost<'a, 'b> {
    search: &'a Search<'b>,
}

impl CostFunction for Cost<'_, '_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.search.assess(x).map_or(INFEASIBLE, |c| c.cost))
    }
}

fn pick(best: &mut Option<Candidate>, c: Candidate) {
    if best.as_ref().is_none_or(|b| better(&c, b)) {
        *best = Some(c);
    }
}

/// Best allocation for the problem, deterministic for a given problem.
pub fn optimize(p: &OptProblem) -> Result<OptResult> {
    p.validate()?;
    let engine = EngineKind::select(&p.channel, &p.protocol, &p.feedback, p.inr_mode)?;
    if engine == EngineKind::CorrelatedRtd {
        CorrelatedChannel::from_params(&p.channel)?;
    }
    let m = p.protocol.m_max;
    let relay_fixed_zero = p.channel.relay_absent();
    let mut dims: Vec<Dim> = (2..=m + 1).map(|i| Dim::SourceDb(i - 1)).collect();
    if !relay_fixed_zero {
        let first = match p.scenario {
            Scenario::SumPower { .. } => 2,
            Scenario::Individual { .. } => 3,
        };
        dims.extend((first..=m + 1).map(|i| Dim::RelayDb(i - 1)));
    }
    if p.free_rates {
        dims.push(Dim::Rate);
        if p.protocol.coding == Coding::VariableLength {
            dims.extend((2..=m + 1).map(|i| Dim::LogLength(i - 1)));
        }
    }
    let search = Search {
        p,
        engine,
        dims,
        relay_fixed_zero,
        evaluations: AtomicU64::new(0),
    };

    let (axes, step) = search.axes();
    let total: usize = axes.iter().map(Vec::len).product();
    let points: Vec<Vec<f64>> = (0..total)
        .map(|mut idx| {
            axes.iter()
                .map(|ax| {
                    let v = ax[idx % ax.len()];
                    idx /= ax.len();
                    v
                })
                .collect()
        })
        .collect();
    let graded: Vec<Option<Candidate>> = points.par_iter().map(|x| search.assess(x)).collect();
    let mut best: Option<Candidate> = None;
    for c in graded.into_iter().flatten() {
        pick(&mut best, c);
    }

    let mut traces = Vec::new();
    if !search.dims.is_empty() && p.starts > 0 {
        let mut starts = Vec::with_capacity(p.starts);
        if let Some(b) = &best {
            starts.push(b.x.clone());
        }
        starts.push(search.uniform_point());
        let mut h = 1;
        while starts.len() < p.starts {
            starts.push(search.halton(h));
            h += 1;
        }
        let polished: Vec<(Option<Candidate>, StartTrace)> = starts.iter().map(|s| search.polish(s)).collect();
        for (c, t) in polished {
            traces.push(t);
            if let Some(c) = c {
                pick(&mut best, c);
            }
        }
    }

    let best = best.ok_or_else(|| Error::Infeasible("no candidate satisfies the constraints".into()))?;
    // report values recomputed from the final allocation
    let metrics = search.metrics(&best.cfg, &best.powers)?;
    let best_value = match p.objective {
        Objective::MaxThroughput => metrics.throughput,
        Objective::MinOutage => metrics.outage,
    };
    Ok(OptResult {
        powers: best.powers,
        rates: best.cfg.rates,
        best_value,
        metrics,
        engine,
        trace: OptTrace {
            evaluations: search.evaluations.load(Ordering::Relaxed),
            grid_points: total,
            grid_step_db: step,
            starts: traces,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageResult {
    /// Largest `lambda_sd` whose optimized outage meets the target.
    pub lambda_sd: f64,
    /// Same for a single-user system without ARQ at the source power level.
    pub baseline: f64,
    pub ratio: f64,
    /// Optimized outage at `lambda_sd`.
    pub outage: f64,
    pub optimizations: usize,
}

/// `lambda_sd` threshold of one transmission at power `phi` and rate `r`.
pub fn no_arq_baseline(eps: f64, phi: f64, r: f64) -> f64 {
    -(-eps).ln_1p() * phi / r.exp_m1()
}

/// Coverage of the problem's scheme: the largest `lambda_sd` for which the
/// outage-optimized allocation reaches `eps`, relative to the no-ARQ baseline.
/// `bounds` is the initial bracket; it is widened by decades if needed.
/// When `lambda_sr == lambda_sd` on entry the two move together, which the
/// correlated model requires.
pub fn coverage_region(p: &OptProblem, eps: f64, bounds: (f64, f64)) -> Result<CoverageResult> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(format!("outage target {eps} outside (0, 1)")));
    }
    let (mut lo, mut hi) = bounds;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::invalid(format!("bad coverage bracket ({lo}, {hi})")));
    }
    let mut q = p.clone();
    q.objective = Objective::MinOutage;
    q.outage_cap = None;
    let tied = p.channel.lambda_sr == p.channel.lambda_sd;
    let mut runs = 0usize;
    let mut outage_at = |l: f64| -> Result<f64> {
        q.channel.lambda_sd = l;
        if tied {
            q.channel.lambda_sr = l;
        }
        runs += 1;
        Ok(optimize(&q)?.metrics.outage)
    };
    // work on h = log(outage / eps) against log(lambda_sd)
    let h = |o: f64| o.max(1e-300).ln() - eps.ln();
    let mut olo = outage_at(lo)?;
    let mut widen = 0;
    while olo > eps {
        if widen == 12 {
            return Err(Error::Infeasible(format!(
                "outage {eps} not reached even at lambda_sd = {lo:e}"
            )));
        }
        hi = lo;
        lo /= 10.0;
        olo = outage_at(lo)?;
        widen += 1;
    }
    let mut ohi = outage_at(hi)?;
    widen = 0;
    while ohi <= eps {
        if widen == 12 {
            return Err(Error::Infeasible(format!(
                "outage stays below {eps} up to lambda_sd = {hi:e}"
            )));
        }
        lo = hi;
        olo = ohi;
        hi *= 10.0;
        ohi = outage_at(hi)?;
        widen += 1;
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let (mut ha, mut hb) = (h(olo), h(ohi));
    let mut best = (lo, olo);
    let mut side = 0i8;
    for _ in 0..60 {
        if b - a < 1e-7 || ha.abs() < 1e-9 {
            break;
        }
        let t = (a * hb - b * ha) / (hb - ha);
        let t = if t.is_finite() && t > a && t < b {
            t
        } else {
            0.5 * (a + b)
        };
        let o = outage_at(t.exp())?;
        let ht = h(o);
        if ht <= 0.0 {
            a = t;
            ha = ht;
            best = (t.exp(), o);
            if side == -1 {
                hb *= 0.5;
            }
            side = -1;
        } else {
            b = t;
            hb = ht;
            if side == 1 {
                ha *= 0.5;
            }
            side = 1;
        }
    }
    let baseline = no_arq_baseline(eps, p.scenario.source_level(), p.protocol.initial_rate());
    Ok(CoverageResult {
        lambda_sd: best.0,
        baseline,
        ratio: best.0 / baseline,
        outage: best.1,
        optimizations: runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::evaluate;
    use crate::types::Protocol;

    fn fig3() -> ChannelParams {
        ChannelParams::new(0.5, 1.0, 0.5)
    }

    fn quick(mut p: OptProblem) -> OptProblem {
        p.grid.step_db = 2.0;
        p.starts = 3;
        p.max_iters = 150;
        p
    }

    #[test]
    fn single_round_takes_all_power() {
        let cfg = ProtocolConfig::fixed_length(Protocol::Rtd, 0, 1.0);
        let p = OptProblem::new(
            fig3(),
            cfg,
            Objective::MinOutage,
            Scenario::SumPower { phi_total: 10.0 },
        );
        let r = optimize(&p).unwrap();
        assert!((r.powers.source[0] - 10.0).abs() < 1e-8);
        let expect = 1.0 - (-(1f64.exp_m1()) / 10.0).exp();
        assert!((r.best_value - expect).abs() < 1e-10);
    }

    #[test]
    fn beats_uniform_and_meets_constraint() {
        for proto in [Protocol::Rtd, Protocol::Inr] {
            let cfg = ProtocolConfig::fixed_length(proto, 1, 1.0);
            let phi = 10f64.powf(0.5);
            let p = quick(OptProblem::new(
                fig3(),
                cfg.clone(),
                Objective::MaxThroughput,
                Scenario::SumPower { phi_total: phi },
            ));
            let r = optimize(&p).unwrap();
            let uniform = evaluate(
                &fig3(),
                &cfg,
                &PowerAllocation::uniform(1, phi),
                &FeedbackNoise::noiseless(),
                InrMode::Exact2D,
            )
            .unwrap();
            assert!(r.best_value >= uniform.metrics.throughput - 1e-12);
            assert!(r.metrics.phi_total <= phi * (1.0 + 1e-6));
            assert!((r.metrics.phi_total - phi).abs() < 0.01 * phi);
            let again = evaluate(&fig3(), &cfg, &r.powers, &FeedbackNoise::noiseless(), InrMode::Exact2D).unwrap();
            assert!((again.metrics.throughput - r.best_value).abs() < 1e-9);
        }
    }

    #[test]
    fn individual_constraints() {
        let cfg = ProtocolConfig::fixed_length(Protocol::Rtd, 2, 1.0);
        let p = quick(OptProblem::new(
            fig3(),
            cfg,
            Objective::MinOutage,
            Scenario::Individual { phi_s: 4.0, phi_r: 2.0 },
        ));
        let r = optimize(&p).unwrap();
        assert!(r.metrics.phi_s <= 4.0 * (1.0 + 1e-6));
        assert!(r.metrics.phi_r <= 2.0 * (1.0 + 1e-6));
    }

    #[test]
    fn finer_grid_never_worse() {
        let cfg = ProtocolConfig::fixed_length(Protocol::Inr, 1, 1.0);
        let mut p = OptProblem::new(
            fig3(),
            cfg,
            Objective::MaxThroughput,
            Scenario::SumPower { phi_total: 3.0 },
        );
        p.starts = 0;
        p.grid.step_db = 2.0;
        let coarse = optimize(&p).unwrap().best_value;
        p.grid.step_db = 1.0;
        let fine = optimize(&p).unwrap().best_value;
        assert!(fine >= coarse - 1e-9);
    }

    #[test]
    fn deterministic() {
        let cfg = ProtocolConfig::fixed_length(Protocol::Rtd, 1, 1.0);
        let mut p = quick(OptProblem::new(
            fig3(),
            cfg,
            Objective::MaxThroughput,
            Scenario::SumPower { phi_total: 2.0 },
        ));
        p.free_rates = true;
        p.rate_bounds = (0.2, 3.0);
        let a = optimize(&p).unwrap();
        let b = optimize(&p).unwrap();
        assert_eq!(a, b);
        assert!(a.rates[0] >= 0.2 && a.rates[0] <= 3.0);
    }

    #[test]
    fn infeasible_cap() {
        let cfg = ProtocolConfig::fixed_length(Protocol::Rtd, 1, 1.0);
        let mut p = quick(OptProblem::new(
            fig3(),
            cfg,
            Objective::MaxThroughput,
            Scenario::SumPower { phi_total: 0.01 },
        ));
        p.outage_cap = Some(1e-9);
        assert!(matches!(optimize(&p), Err(Error::Infeasible(_))));
    }

    #[test]
    fn baseline_coverage_is_one() {
        let cfg = ProtocolConfig::fixed_length(Protocol::Inr, 0, 1.0);
        let p = OptProblem::new(
            ChannelParams::single_user(1.0),
            cfg,
            Objective::MinOutage,
            Scenario::SumPower { phi_total: 3.0 },
        );
        let c = coverage_region(&p, 1e-2, (1e-3, 1.0)).unwrap();
        assert!((c.ratio - 1.0).abs() < 1e-6, "{}", c.ratio);
    }

    #[test]
    fn arq_and_relay_extend_coverage() {
        let phi = 10f64.powf(0.5);
        let single = OptProblem::new(
            ChannelParams::single_user(1.0),
            ProtocolConfig::fixed_length(Protocol::Rtd, 1, 0.5),
            Objective::MinOutage,
            Scenario::SumPower { phi_total: phi },
        );
        let relay = OptProblem {
            channel: ChannelParams::new(0.5, 1.0, 0.5),
            ..single.clone()
        };
        let s = coverage_region(&quick(single), 1e-2, (1e-3, 10.0)).unwrap();
        let r = coverage_region(&quick(relay), 1e-2, (1e-3, 10.0)).unwrap();
        assert!(s.ratio >= 1.0);
        assert!(r.ratio >= s.ratio, "relay {} single {}", r.ratio, s.ratio);
    }
}
