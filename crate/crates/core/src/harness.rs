//! Monte-Carlo sweeps over device count or deadline, with every scheme run on
//! the same sampled cell, plus CSV output and a post-processing aggregate.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use crate::baselines::Scheme;
use crate::error::HarnessError;
use crate::scenario::{generate_scenario, ScenarioConfig};

pub const CSV_HEADER: [&str; 13] = [
    "sweep_param",
    "sweep_value",
    "scheme",
    "trial",
    "seed",
    "energy_j",
    "max_delay_s",
    "mean_delay_s",
    "weighted_cost",
    "offloaders",
    "feasible",
    "walltime_ms",
    "iterations",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParam {
    NumDevices,
    TauMax,
}

impl SweepParam {
    pub fn id(self) -> &'static str {
        match self {
            SweepParam::NumDevices => "num_devices",
            SweepParam::TauMax => "tau_max",
        }
    }

    /// Key mixed into the child seed. Deadlines do not enter the random draws,
    /// so a deadline sweep reuses the same cells at every value.
    pub fn seed_key(self, value: f64) -> f64 {
        match self {
            SweepParam::NumDevices => value,
            SweepParam::TauMax => 0.0,
        }
    }

    /// `base` with the swept field set to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> ScenarioConfig {
        let mut cfg = base.clone();
        match self {
            SweepParam::NumDevices => cfg.num_devices = value as usize,
            SweepParam::TauMax => cfg.tau_max = value,
        }
        cfg
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SweepParam {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "num_devices" => Ok(SweepParam::NumDevices),
            "tau_max" => Ok(SweepParam::TauMax),
            other => Err(HarnessError::InvalidSweep(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub trials: usize,
    pub schemes: Vec<Scheme>,
    pub base: ScenarioConfig,
    pub master_seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Record per-row wall time. Off by default so output is reproducible.
    pub timing: bool,
}

impl SweepSpec {
    pub fn new(param: SweepParam, values: Vec<f64>, trials: usize, base: ScenarioConfig, master_seed: u64) -> Self {
        Self {
            param,
            values,
            trials,
            schemes: Scheme::ALL.to_vec(),
            base,
            master_seed,
            workers: None,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.values.is_empty() {
            return Err(HarnessError::InvalidSweep("no sweep values".into()));
        }
        if self.trials == 0 {
            return Err(HarnessError::InvalidSweep("trials must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(HarnessError::InvalidSweep("no schemes selected".into()));
        }
        if self.workers == Some(0) {
            return Err(HarnessError::InvalidSweep("workers must be at least 1".into()));
        }
        for &v in &self.values {
            if self.param == SweepParam::NumDevices && !(v >= 1.0 && v.fract() == 0.0) {
                return Err(HarnessError::InvalidSweep(format!("device count {v} is not a positive integer")));
            }
            self.param.apply(&self.base, v).validate()?;
        }
        Ok(())
    }
}

/// One scheme on one sampled cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_param: SweepParam,
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub trial: usize,
    pub seed: u64,
    pub energy_j: f64,
    pub max_delay_s: f64,
    pub mean_delay_s: f64,
    pub weighted_cost: f64,
    pub offloaders: usize,
    pub feasible: bool,
    pub walltime_ms: f64,
    pub iterations: usize,
    /// Set when the scheme failed; the numeric fields are then zero.
    pub error: Option<String>,
}

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the cell at (`key`, `trial`), independent of scheme and worker count.
pub fn child_seed(master: u64, key: f64, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ key.to_bits()) ^ trial as u64)
}

/// Runs `schemes` on the cell generated from `config`.
pub fn run_cell(
    param: SweepParam,
    value: f64,
    trial: usize,
    config: &ScenarioConfig,
    schemes: &[Scheme],
    timing: bool,
) -> Result<Vec<ResultRow>, HarnessError> {
    let scenario = generate_scenario(config)?;
    Ok(schemes
        .iter()
        .map(|&scheme| {
            let start = Instant::now();
            let outcome = scheme.run(&scenario);
            let walltime_ms = if timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
            let mut row = ResultRow {
                sweep_param: param,
                sweep_value: value,
                scheme,
                trial,
                seed: config.seed,
                energy_j: 0.0,
                max_delay_s: 0.0,
                mean_delay_s: 0.0,
                weighted_cost: 0.0,
                offloaders: 0,
                feasible: false,
                walltime_ms,
                iterations: 0,
                error: None,
            };
            match outcome {
                Ok(r) => {
                    row.energy_j = r.costs.total_energy();
                    row.max_delay_s = r.costs.max_delay();
                    row.mean_delay_s = r.costs.mean_delay();
                    row.weighted_cost = r.costs.total;
                    row.offloaders = r.decision.num_offloaders();
                    row.feasible = r.feasible();
                    row.iterations = r.iterations;
                }
                Err(e) => {
                    warn!("{scheme} failed at {param}={value}, trial {trial}: {e}");
                    row.error = Some(e.to_string());
                }
            }
            row
        })
        .collect())
}

/// Runs every (value, trial) cell, in parallel, and returns the rows sorted
/// by value position, scheme, trial.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ResultRow>, HarnessError> {
    spec.validate()?;
    let cells: Vec<(usize, usize)> = (0..spec.values.len())
        .flat_map(|v| (0..spec.trials).map(move |t| (v, t)))
        .collect();
    let run = || -> Result<Vec<(usize, ResultRow)>, HarnessError> {
        let nested: Result<Vec<Vec<(usize, ResultRow)>>, HarnessError> = cells
            .par_iter()
            .map(|&(vi, trial)| {
                let value = spec.values[vi];
                let mut cfg = spec.param.apply(&spec.base, value);
                cfg.seed = child_seed(spec.master_seed, spec.param.seed_key(value), trial);
                let rows = run_cell(spec.param, value, trial, &cfg, &spec.schemes, spec.timing)?;
                Ok(rows.into_iter().map(|r| (vi, r)).collect())
            })
            .collect();
        Ok(nested?.into_iter().flatten().collect())
    };
    info!(
        "sweeping {} over {} values x {} trials x {} schemes",
        spec.param,
        spec.values.len(),
        spec.trials,
        spec.schemes.len()
    );
    let mut rows = match spec.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::InvalidSweep(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    rows.sort_by_key(|(idx, r)| (*idx, r.scheme, r.trial));
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

fn float(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let io = |e: csv::Error| HarnessError::Io(e.into());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.sweep_param.id().to_string(),
            float(r.sweep_value),
            r.scheme.id().to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            float(r.energy_j),
            float(r.max_delay_s),
            float(r.mean_delay_s),
            float(r.weighted_cost),
            r.offloaders.to_string(),
            r.feasible.to_string(),
            float(r.walltime_ms),
            r.iterations.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(rows: &[ResultRow], path: &std::path::Path) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path)?;
    write_csv(rows, std::io::BufWriter::new(file))
}

fn field<T: FromStr>(record: &csv::StringRecord, idx: usize, line: usize) -> Result<T, HarnessError> {
    let raw = record.get(idx).unwrap_or_default();
    raw.parse()
        .map_err(|_| HarnessError::Malformed(format!("line {line}: bad {} `{raw}`", CSV_HEADER[idx])))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>, HarnessError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| HarnessError::Malformed(e.to_string()))?
        .clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(HarnessError::Malformed(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| HarnessError::Malformed(format!("line {line}: {e}")))?;
        let scheme: String = field(&record, 2, line)?;
        rows.push(ResultRow {
            sweep_param: field::<String>(&record, 0, line)?.parse()?,
            sweep_value: field(&record, 1, line)?,
            scheme: scheme.parse().map_err(|_| HarnessError::UnknownScheme(scheme))?,
            trial: field(&record, 3, line)?,
            seed: field(&record, 4, line)?,
            energy_j: field(&record, 5, line)?,
            max_delay_s: field(&record, 6, line)?,
            mean_delay_s: field(&record, 7, line)?,
            weighted_cost: field(&record, 8, line)?,
            offloaders: field(&record, 9, line)?,
            feasible: field(&record, 10, line)?,
            walltime_ms: field(&record, 11, line)?,
            iterations: field(&record, 12, line)?,
            error: None,
        });
    }
    Ok(rows)
}

/// Per (value, scheme) statistics over trials.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub sweep_param: SweepParam,
    pub sweep_value: f64,
    pub scheme: Scheme,
    pub trials: usize,
    pub mean_energy: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95_energy: f64,
    pub mean_max_delay: f64,
    pub mean_offloaders: f64,
    pub feasible_fraction: f64,
}

fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Groups rows by (param, value, scheme) in first-appearance order.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(SweepParam, u64, Scheme)> = Vec::new();
    for r in rows {
        let key = (r.sweep_param, r.sweep_value.to_bits(), r.scheme);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(param, bits, scheme)| {
            let group: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.sweep_param == param && r.sweep_value.to_bits() == bits && r.scheme == scheme)
                .collect();
            let n = group.len() as f64;
            let energy: Vec<f64> = group.iter().map(|r| r.energy_j).collect();
            let (mean_energy, ci95_energy) = mean_ci(&energy);
            AggregateRow {
                sweep_param: param,
                sweep_value: f64::from_bits(bits),
                scheme,
                trials: group.len(),
                mean_energy,
                ci95_energy,
                mean_max_delay: group.iter().map(|r| r.max_delay_s).sum::<f64>() / n,
                mean_offloaders: group.iter().map(|r| r.offloaders as f64).sum::<f64>() / n,
                feasible_fraction: group.iter().filter(|r| r.feasible).count() as f64 / n,
            }
        })
        .collect()
}

/// Whitespace-separated table, one block per scheme separated by two blank
/// lines so gnuplot can address schemes by `index`.
pub fn write_aggregate<W: Write>(agg: &[AggregateRow], mut out: W) -> Result<(), HarnessError> {
    let mut schemes: Vec<Scheme> = agg.iter().map(|a| a.scheme).collect();
    schemes.sort();
    schemes.dedup();
    for (i, scheme) in schemes.iter().enumerate() {
        if i > 0 {
            writeln!(out, "\n")?;
        }
        writeln!(out, "# scheme {scheme}")?;
        writeln!(
            out,
            "# sweep_value trials mean_energy_j ci95_energy_j mean_max_delay_s mean_offloaders feasible_fraction"
        )?;
        for a in agg.iter().filter(|a| a.scheme == *scheme) {
            writeln!(
                out,
                "{} {} {} {} {} {} {}",
                float(a.sweep_value),
                a.trials,
                float(a.mean_energy),
                float(a.ci95_energy),
                float(a.mean_max_delay),
                float(a.mean_offloaders),
                float(a.feasible_fraction)
            )?;
        }
    }
    Ok(())
}
