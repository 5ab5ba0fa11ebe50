//! The four commands. Each produces a table (one row per sweep point, in
//! sweep order) and a provenance record for the JSON sidecar.

use rayon::prelude::*;
use relayarq::engine::{evaluate, EngineKind};
use relayarq::mc::{simulate, McResult};
use relayarq::optimizer::{coverage_region, optimize, Objective, OptTrace};
use relayarq::{Error, FadingMode, Metrics, Protocol, Result};
use serde::Serialize;

use crate::config::{Config, Point};

pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub engines: Vec<String>,
    pub traces: Vec<OptTrace>,
    /// Largest |z| per row, validation runs only.
    pub max_z: Vec<f64>,
}

#[derive(Serialize)]
pub struct Sidecar<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config_sha256: String,
    pub seed: u64,
    pub engines: &'a [String],
    pub points: usize,
    pub columns: &'a [&'static str],
    #[serde(skip_serializing_if = "<[OptTrace]>::is_empty")]
    pub optimizer_traces: &'a [OptTrace],
}

const LEAD: [&str; 6] = ["snr_db", "protocol", "fading", "delta", "M", "R1"];
const METRICS: [&str; 5] = ["throughput", "outage", "phi_s", "phi_r", "phi_total"];

pub fn num(x: f64) -> String {
    format!("{x}")
}

fn protocol_name(p: Protocol) -> &'static str {
    match p {
        Protocol::Rtd => "rtd",
        Protocol::Inr => "inr",
    }
}

fn fading_name(f: FadingMode) -> &'static str {
    match f {
        FadingMode::QuasiStatic => "quasi_static",
        FadingMode::FastFading => "fast_fading",
    }
}

fn lead(pt: &Point, r1: f64) -> Vec<String> {
    vec![
        num(pt.snr_db),
        protocol_name(pt.protocol.protocol).into(),
        fading_name(pt.channel.fading).into(),
        num(pt.channel.delta),
        pt.protocol.m_max.to_string(),
        num(r1),
    ]
}

fn metric_cells(m: &Metrics) -> Vec<String> {
    vec![
        num(m.throughput),
        num(m.outage),
        num(m.phi_s),
        if m.relay_active { num(m.phi_r) } else { String::new() },
        num(m.phi_total),
    ]
}

fn z(a: f64, b: f64, se: f64) -> f64 {
    let d = a - b;
    if se > 0.0 {
        d / se
    } else if d.abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0) {
        0.0
    } else {
        d.signum() * f64::INFINITY
    }
}

fn point_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn with_index<T>(i: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::InvalidInput(s) => Error::InvalidInput(format!("point {i}: {s}")),
        Error::InvalidPower(s) => Error::InvalidPower(format!("point {i}: {s}")),
        Error::Config(s) => Error::Config(format!("point {i}: {s}")),
        Error::Domain(s) => Error::Domain(format!("point {i}: {s}")),
        Error::Degenerate(s) => Error::Degenerate(format!("point {i}: {s}")),
        Error::NoRoot(s) => Error::NoRoot(format!("point {i}: {s}")),
        Error::Infeasible(s) => Error::Infeasible(format!("point {i}: {s}")),
        other => other,
    })
}

fn unique(names: impl Iterator<Item = String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for n in names {
        if !out.contains(&n) {
            out.push(n);
        }
    }
    out
}

struct Evaluated {
    row: Vec<String>,
    engine: String,
    max_z: f64,
}

fn simulate_point(cfg: &Config, pt: &Point, i: usize, seed: Option<u64>) -> Result<McResult> {
    let mut mc = cfg.mc_config(seed);
    mc.seed = point_seed(mc.seed, i);
    simulate(&pt.channel, &pt.protocol, &pt.powers, &cfg.feedback, &mc)
}

pub fn evaluate_cmd(cfg: &Config, validate: bool, seed: Option<u64>) -> Result<Table> {
    let points = cfg.points(false)?;
    if validate && cfg.mc.only {
        return Err(Error::Config(
            "validation compares a closed form with the simulator; unset mc.only".into(),
        ));
    }
    let results: Vec<Result<Evaluated>> = points
        .par_iter()
        .enumerate()
        .map(|(i, pt)| {
            with_index(
                i,
                (|| {
                    let mut row = lead(pt, pt.protocol.initial_rate());
                    if cfg.mc.only {
                        let r = simulate_point(cfg, pt, i, seed)?;
                        row.extend(metric_cells(&r.metrics));
                        row.push("monte_carlo".into());
                        return Ok(Evaluated {
                            row,
                            engine: "monte_carlo".into(),
                            max_z: 0.0,
                        });
                    }
                    let ev = evaluate(
                        &pt.channel,
                        &pt.protocol,
                        &pt.powers,
                        &cfg.feedback,
                        cfg.protocol.inr_mode,
                    )?;
                    let engine = ev.engine.name().to_string();
                    row.extend(metric_cells(&ev.metrics));
                    row.push(engine.clone());
                    let mut max_z = 0.0f64;
                    if validate {
                        let r = simulate_point(cfg, pt, i, seed)?;
                        row.extend(metric_cells(&r.metrics));
                        let (a, m, s) = (&ev.metrics, &r.metrics, &r.std_errors);
                        let mut zs = vec![
                            z(a.throughput, m.throughput, s.throughput),
                            z(a.outage, m.outage, s.outage),
                            z(a.phi_s, m.phi_s, s.phi_s),
                        ];
                        zs.push(if a.relay_active && m.relay_active {
                            z(a.phi_r, m.phi_r, s.phi_r)
                        } else {
                            f64::NAN
                        });
                        zs.push(z(a.phi_total, m.phi_total, s.phi_total));
                        for &v in &zs {
                            if !v.is_nan() {
                                max_z = max_z.max(v.abs());
                            }
                        }
                        row.extend(zs.iter().map(|&v| if v.is_nan() { String::new() } else { num(v) }));
                    }
                    Ok(Evaluated { row, engine, max_z })
                })(),
            )
        })
        .collect();
    let results: Vec<Evaluated> = results.into_iter().collect::<Result<_>>()?;
    let mut header: Vec<&'static str> = LEAD.to_vec();
    header.extend(METRICS);
    header.push("engine_mode");
    if validate {
        header.extend(["mc_throughput", "mc_outage", "mc_phi_s", "mc_phi_r", "mc_phi_total"]);
        header.extend(["z_throughput", "z_outage", "z_phi_s", "z_phi_r", "z_phi_total"]);
    }
    Ok(Table {
        header,
        engines: unique(results.iter().map(|r| r.engine.clone())),
        max_z: results.iter().map(|r| r.max_z).collect(),
        rows: results.into_iter().map(|r| r.row).collect(),
        traces: Vec::new(),
    })
}

fn joined(v: &[f64]) -> String {
    v.iter().map(|&x| num(x)).collect::<Vec<_>>().join(";")
}

pub fn optimize_cmd(cfg: &Config) -> Result<Table> {
    let points = cfg.points(true)?;
    let results: Vec<Result<(Vec<String>, String, OptTrace)>> = points
        .par_iter()
        .enumerate()
        .map(|(i, pt)| {
            with_index(
                i,
                (|| {
                    let problem = cfg.problem(pt);
                    let r = optimize(&problem)?;
                    let mut row = lead(pt, r.rates[0]);
                    row.push(
                        match problem.objective {
                            Objective::MaxThroughput => "max_throughput",
                            Objective::MinOutage => "min_outage",
                        }
                        .into(),
                    );
                    row.push(pt.outage_cap.map(num).unwrap_or_default());
                    row.extend(metric_cells(&r.metrics));
                    row.push(r.engine.name().into());
                    row.push(joined(&r.powers.source));
                    row.push(joined(&r.powers.relay));
                    row.push(joined(&r.rates));
                    row.push(r.trace.evaluations.to_string());
                    Ok((row, r.engine.name().to_string(), r.trace))
                })(),
            )
        })
        .collect();
    let results: Vec<_> = results.into_iter().collect::<Result<_>>()?;
    let mut header: Vec<&'static str> = LEAD.to_vec();
    header.extend(["objective", "outage_cap"]);
    header.extend(METRICS);
    header.extend(["engine_mode", "source_powers", "relay_powers", "rates", "evaluations"]);
    Ok(Table {
        header,
        engines: unique(results.iter().map(|r| r.1.clone())),
        max_z: Vec::new(),
        traces: results.iter().map(|r| r.2.clone()).collect(),
        rows: results.into_iter().map(|r| r.0).collect(),
    })
}

pub fn coverage_cmd(cfg: &Config) -> Result<Table> {
    let points = cfg.points(false)?;
    let eps = cfg.opt.epsilon;
    let results: Vec<Result<(Vec<String>, String)>> = points
        .par_iter()
        .enumerate()
        .map(|(i, pt)| {
            with_index(
                i,
                (|| {
                    let problem = cfg.problem(pt);
                    let engine = EngineKind::select(&pt.channel, &pt.protocol, &cfg.feedback, cfg.protocol.inr_mode)?;
                    let c = coverage_region(&problem, eps, cfg.opt.lambda_bounds)?;
                    let mut row = lead(pt, pt.protocol.initial_rate());
                    row.extend([
                        num(eps),
                        num(c.lambda_sd),
                        num(c.baseline),
                        num(c.ratio),
                        num(c.outage),
                        engine.name().into(),
                        c.optimizations.to_string(),
                    ]);
                    Ok((row, engine.name().to_string()))
                })(),
            )
        })
        .collect();
    let results: Vec<_> = results.into_iter().collect::<Result<_>>()?;
    let mut header: Vec<&'static str> = LEAD.to_vec();
    header.extend([
        "epsilon",
        "lambda_sd",
        "baseline_lambda_sd",
        "coverage_ratio",
        "outage",
        "engine_mode",
        "optimizations",
    ]);
    Ok(Table {
        header,
        engines: unique(results.iter().map(|r| r.1.clone())),
        max_z: Vec::new(),
        traces: Vec::new(),
        rows: results.into_iter().map(|r| r.0).collect(),
    })
}

pub fn write_csv<W: std::io::Write>(t: &Table, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&t.header)?;
    for r in &t.rows {
        w.write_record(r)?;
    }
    w.flush()
}
