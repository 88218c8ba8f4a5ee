//! `mecoff`: run sweeps, single cells and oracle comparisons from the command line.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use mecoff_core::baselines::Scheme;
use mecoff_core::harness::{
    aggregate, read_csv, run_cell, run_sweep, write_aggregate, write_csv, write_csv_file, ResultRow, SweepParam,
    SweepSpec,
};
use mecoff_core::oracle::brute_force_optimal;
use mecoff_core::scenario::{generate_scenario, ScenarioConfig};

#[derive(Parser)]
#[command(name = "mecoff", version, about = "Multi-user MEC offloading with MU-MIMO beamforming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat key = value scenario file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the file's `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Extra `key=value` overrides applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo sweep over device count or deadline; writes raw rows as CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// num_devices or tau_max.
        #[arg(long, default_value = "num_devices")]
        sweep: String,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Comma-separated scheme ids (dm-mmco, op-mmse, fdma, tdma, local-only).
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<String>>,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Record per-row wall time (makes output run-dependent).
        #[arg(long)]
        timing: bool,
    },
    /// Run the schemes on one sampled cell and print a summary.
    Single {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<String>>,
        /// Also write the rows as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the joint scheme with exhaustive search over decisions.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        trials: usize,
    },
    /// Means and 95% intervals per (value, scheme) from a sweep CSV, as a gnuplot table.
    Aggregate {
        /// Sweep CSV produced by `sweep`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

type Fatal = Box<dyn std::error::Error>;

fn load_config(common: &Common) -> Result<ScenarioConfig, Fatal> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::parse(
            &fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?,
        )?,
        None => ScenarioConfig::default(),
    };
    for kv in &common.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_schemes(ids: &Option<Vec<String>>) -> Result<Vec<Scheme>, Fatal> {
    match ids {
        None => Ok(Scheme::ALL.to_vec()),
        Some(ids) => Ok(ids.iter().map(|s| s.parse()).collect::<Result<_, String>>()?),
    }
}

fn emit_rows(rows: &[ResultRow], out: Option<&Path>) -> Result<(), Fatal> {
    match out {
        Some(path) => write_csv_file(rows, path)?,
        None => write_csv(rows, io::stdout().lock())?,
    }
    Ok(())
}

/// Exit status for a finished run: 2 when some rows carry errors.
fn row_status(rows: &[ResultRow]) -> ExitCode {
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        error!("{failed} of {} rows failed", rows.len());
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn run(cli: Cli) -> Result<ExitCode, Fatal> {
    match cli.command {
        Command::Sweep {
            common,
            trials,
            sweep,
            values,
            schemes,
            out,
            workers,
            timing,
        } => {
            let base = load_config(&common)?;
            let mut spec = SweepSpec::new(sweep.parse()?, values, trials, base.clone(), base.seed);
            spec.schemes = parse_schemes(&schemes)?;
            spec.workers = workers;
            spec.timing = timing;
            let rows = run_sweep(&spec)?;
            emit_rows(&rows, out.as_deref())?;
            info!("wrote {} rows", rows.len());
            Ok(row_status(&rows))
        }
        Command::Single { common, schemes, out } => {
            let cfg = load_config(&common)?;
            let rows = run_cell(
                SweepParam::NumDevices,
                cfg.num_devices as f64,
                0,
                &cfg,
                &parse_schemes(&schemes)?,
                true,
            )?;
            let mut stdout = io::stdout().lock();
            writeln!(
                stdout,
                "{:<11} {:>14} {:>12} {:>14} {:>10} {:>9} {:>10}",
                "scheme", "energy_j", "max_delay_s", "weighted_cost", "offloaders", "feasible", "time_ms"
            )?;
            for r in &rows {
                match &r.error {
                    Some(e) => writeln!(stdout, "{:<11} error: {e}", r.scheme.id())?,
                    None => writeln!(
                        stdout,
                        "{:<11} {:>14.6e} {:>12.4} {:>14.6e} {:>10} {:>9} {:>10.1}",
                        r.scheme.id(),
                        r.energy_j,
                        r.max_delay_s,
                        r.weighted_cost,
                        r.offloaders,
                        r.feasible,
                        r.walltime_ms
                    )?,
                }
            }
            if let Some(path) = out {
                write_csv_file(&rows, &path)?;
            }
            Ok(row_status(&rows))
        }
        Command::OracleCheck { common, trials } => {
            let base = load_config(&common)?;
            let mut stdout = io::stdout().lock();
            writeln!(stdout, "trial seed oracle_cost joint_cost gap_pct")?;
            let mut failures = 0;
            for trial in 0..trials {
                let mut cfg = base.clone();
                cfg.seed = mecoff_core::harness::child_seed(base.seed, cfg.num_devices as f64, trial);
                let scenario = generate_scenario(&cfg)?;
                let joint = Scheme::DmMmco.run(&scenario);
                let oracle = brute_force_optimal(&scenario);
                match (oracle, joint) {
                    (Ok(o), Ok(j)) => {
                        let gap = 100.0 * (j.costs.total - o.costs.total) / o.costs.total.abs();
                        writeln!(
                            stdout,
                            "{trial} {} {:.8e} {:.8e} {gap:.4}",
                            cfg.seed, o.costs.total, j.costs.total
                        )?;
                    }
                    (o, j) => {
                        failures += 1;
                        let why = o.err().map(|e| e.to_string()).or(j.err().map(|e| e.to_string()));
                        writeln!(stdout, "{trial} {} error: {}", cfg.seed, why.unwrap_or_default())?;
                    }
                }
            }
            Ok(if failures > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::Aggregate { input, out } => {
            let rows = read_csv(fs::File::open(&input).map_err(|e| format!("cannot open {}: {e}", input.display()))?)?;
            let agg = aggregate(&rows);
            match out {
                Some(path) => write_aggregate(&agg, io::BufWriter::new(fs::File::create(path)?))?,
                None => write_aggregate(&agg, io::stdout().lock())?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MECOFF_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
