mod config;
mod run;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use relayarq::Error;
use sha2::{Digest, Sha256};

use run::{Sidecar, Table};

#[derive(Parser)]
#[command(
    name = "relayarq",
    version,
    about = "Throughput, outage and power sweeps for relay-assisted hybrid ARQ"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Directory for `<command>.csv` and `<command>.json`; CSV goes to stdout otherwise.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides `mc.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form metrics for every sweep point.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Also simulate each point and report z-scores.
        #[arg(long)]
        validate: bool,
    },
    /// Optimal power (and optionally rate) allocation per sweep point.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Largest source-destination path loss meeting `opt.epsilon` per sweep point.
    Coverage {
        #[command(flatten)]
        common: Common,
    },
    /// Closed form against Monte Carlo; exits with 1 if any |z| exceeds `--z-max`.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3.0)]
        z_max: f64,
    },
}

const EXIT_FAILED_VALIDATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) | Error::InvalidPower(_) | Error::Config(_) => EXIT_CONFIG,
        Error::Domain(_) | Error::Degenerate(_) | Error::NoRoot(_) | Error::Numerical { .. } => EXIT_NUMERICAL,
        Error::Infeasible(_) => EXIT_INFEASIBLE,
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Evaluate { common, .. } => ("evaluate", common),
        Command::Optimize { common } => ("optimize", common),
        Command::Coverage { common } => ("coverage", common),
        Command::Validate { common, .. } => ("validate", common),
    };
    let (cfg, raw) = match config::load(&common.config) {
        Ok(c) => c,
        Err(msg) => return fail(EXIT_CONFIG, msg),
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return fail(EXIT_CONFIG, "--threads must be positive");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(EXIT_CONFIG, e);
        }
    }
    let table = match &cli.command {
        Command::Evaluate { validate, .. } => run::evaluate_cmd(&cfg, *validate, common.seed),
        Command::Optimize { .. } => run::optimize_cmd(&cfg),
        Command::Coverage { .. } => run::coverage_cmd(&cfg),
        Command::Validate { .. } => run::evaluate_cmd(&cfg, true, common.seed),
    };
    let table = match table {
        Ok(t) => t,
        Err(e) => return fail(exit_code(&e), e),
    };
    if let Err(e) = emit(name, common, &cfg, &raw, &table) {
        return fail(EXIT_CONFIG, e);
    }
    if let Command::Validate { z_max, .. } = cli.command {
        let worst = table.max_z.iter().copied().fold(0.0f64, f64::max);
        let bad: Vec<usize> = (0..table.max_z.len()).filter(|&i| table.max_z[i] > z_max).collect();
        eprintln!("validated {} points, largest |z| = {worst:.3}", table.max_z.len());
        if !bad.is_empty() {
            eprintln!("points beyond |z| = {z_max}: {bad:?}");
            return ExitCode::from(EXIT_FAILED_VALIDATION);
        }
    }
    ExitCode::SUCCESS
}

fn emit(name: &str, common: &Common, cfg: &config::Config, raw: &[u8], table: &Table) -> std::io::Result<()> {
    let Some(dir) = &common.out else {
        let stdout = std::io::stdout().lock();
        return run::write_csv(table, stdout);
    };
    fs::create_dir_all(dir)?;
    run::write_csv(table, fs::File::create(dir.join(format!("{name}.csv")))?)?;
    let sidecar = Sidecar {
        tool: "relayarq",
        version: env!("CARGO_PKG_VERSION"),
        command: name,
        config_sha256: hex::encode(Sha256::digest(raw)),
        seed: cfg.mc_config(common.seed).seed,
        engines: &table.engines,
        points: table.rows.len(),
        columns: &table.header,
        optimizer_traces: &table.traces,
    };
    let mut f = fs::File::create(dir.join(format!("{name}.json")))?;
    serde_json::to_writer_pretty(&mut f, &sidecar).map_err(std::io::Error::other)?;
    writeln!(f)?;
    eprintln!("wrote {}", dir.join(format!("{name}.csv")).display());
    Ok(())
}
