//! The joint scheme and the comparison schemes, all reporting through the
//! same cost accounting.

use std::fmt;
use std::str::FromStr;

use log::debug;

use crate::beamforming::{feasibility_repair, solve_beamforming_with, BeamformingSolution, FpOptions};
use crate::error::BeamformingError;
use crate::scenario::Scenario;
use crate::sdr::dm_mmco_decide;
use crate::system_model::{assemble_costs, cost_constants, total_cost, CostBreakdown, OffloadDecision, UplinkUse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    DmMmco,
    OpMmse,
    Fdma,
    Tdma,
    LocalOnly,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::DmMmco, Scheme::OpMmse, Scheme::Fdma, Scheme::Tdma, Scheme::LocalOnly];

    pub fn id(self) -> &'static str {
        match self {
            Scheme::DmMmco => "dm-mmco",
            Scheme::OpMmse => "op-mmse",
            Scheme::Fdma => "fdma",
            Scheme::Tdma => "tdma",
            Scheme::LocalOnly => "local-only",
        }
    }

    pub fn run(self, scenario: &Scenario) -> Result<SchemeResult, BeamformingError> {
        match self {
            Scheme::DmMmco => run_dm_mmco(scenario),
            Scheme::OpMmse => run_op_mmse(scenario),
            Scheme::Fdma => Ok(run_fdma(scenario)),
            Scheme::Tdma => Ok(run_tdma(scenario)),
            Scheme::LocalOnly => Ok(run_local_only(scenario)),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.id() == s.trim())
            .ok_or_else(|| format!("unknown scheme '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub decision: OffloadDecision,
    pub costs: CostBreakdown,
    /// Uplink rate per device, zero for local devices.
    pub rates: Vec<f64>,
    /// Beamforming iterations (zero for schemes without an iterative design).
    pub iterations: usize,
    /// Devices moved to local computation after the initial decision.
    pub moved: Vec<usize>,
}

impl SchemeResult {
    pub fn feasible(&self) -> bool {
        self.costs.is_feasible()
    }
}

pub fn run_local_only(scenario: &Scenario) -> SchemeResult {
    let k = scenario.num_devices();
    SchemeResult {
        scheme: Scheme::LocalOnly,
        decision: OffloadDecision::all_local(k),
        costs: assemble_costs(scenario, &vec![None; k]),
        rates: vec![0.0; k],
        iterations: 0,
        moved: Vec::new(),
    }
}

fn device_rates(scenario: &Scenario, sol: Option<&BeamformingSolution>) -> Vec<f64> {
    let mut out = vec![0.0; scenario.num_devices()];
    if let Some(sol) = sol {
        for (&k, &r) in sol.devices.iter().zip(&sol.rates) {
            out[k] = r;
        }
    }
    out
}

/// Relaxation-based decisions followed by the alternating beamformer design,
/// with the repair path when the decided set cannot meet its deadlines.
fn joint_pipeline(scheme: Scheme, scenario: &Scenario) -> Result<SchemeResult, BeamformingError> {
    let opts = FpOptions::from_config(&scenario.config);
    let report = dm_mmco_decide(scenario);
    let mut decision = report.decision;
    let set = decision.offload_set();
    let mut moved = Vec::new();
    let solution = if set.is_empty() {
        None
    } else {
        let failure = match solve_beamforming_with(scenario, &set, &opts) {
            Ok(sol) if sol.delay_feasible => Ok(sol),
            Ok(_) => Err(BeamformingError::InnerInfeasible { devices: Vec::new() }),
            Err(e) => Err(e),
        };
        match failure {
            Ok(sol) => Some(sol),
            Err(e) => {
                let out = feasibility_repair(scenario, &decision, &e, &opts);
                decision = out.decision;
                moved = out.moved;
                out.solution
            }
        }
    };
    let costs = match &solution {
        Some(sol) => total_cost(scenario, &decision, &sol.beams)?,
        None => assemble_costs(scenario, &vec![None; scenario.num_devices()]),
    };
    let result = SchemeResult {
        scheme,
        rates: device_rates(scenario, solution.as_ref()),
        iterations: solution.as_ref().map_or(0, |s| s.iterations),
        decision,
        costs,
        moved,
    };
    // All-local is always available; keep it when it is feasible and cheaper.
    let local = run_local_only(scenario);
    if local.feasible() && (!result.feasible() || local.costs.total < result.costs.total) {
        debug!("{scheme}: all-local beats the joint design");
        return Ok(SchemeResult { scheme, ..local });
    }
    Ok(result)
}

pub fn run_dm_mmco(scenario: &Scenario) -> Result<SchemeResult, BeamformingError> {
    joint_pipeline(Scheme::DmMmco, scenario)
}

/// The joint pipeline with one transmit antenna per device: scalar powers,
/// MMSE receivers at the base station.
pub fn run_op_mmse(scenario: &Scenario) -> Result<SchemeResult, BeamformingError> {
    joint_pipeline(Scheme::OpMmse, &scenario.single_antenna())
}

/// Single-antenna matched-filter SNR at full power over the full band.
fn full_band_snr(scenario: &Scenario, k: usize) -> f64 {
    let h = scenario.channels.h[k].column(0);
    scenario.devices[k].p_max * h.norm_squared() / scenario.channels.noise_power
}

/// Cost of the baseline's configuration: `tx_time[k]` is `Some` for offloaders.
fn baseline_costs(scenario: &Scenario, tx_time: &[Option<f64>], wait: f64) -> CostBreakdown {
    let uplinks: Vec<Option<UplinkUse>> = tx_time
        .iter()
        .enumerate()
        .map(|(k, t)| {
            t.map(|t| UplinkUse {
                tx_time: t,
                tx_power: scenario.devices[k].p_max,
                wait,
            })
        })
        .collect();
    assemble_costs(scenario, &uplinks)
}

/// Offloaders that lose against local computation: delay violators first
/// (largest overshoot), then devices whose offload cost exceeds the local cost.
fn worst_offloader(scenario: &Scenario, costs: &CostBreakdown, set: &[usize]) -> Option<usize> {
    let consts = cost_constants(scenario);
    let pick = |score: &dyn Fn(usize) -> f64| {
        set.iter()
            .map(|&k| (k, score(k)))
            .filter(|&(_, s)| s > 0.0)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(k, _)| k)
    };
    pick(&|k| costs.devices[k].delay - scenario.devices[k].tau_max - 1e-9).or_else(|| {
        pick(&|k| {
            let dev = &scenario.devices[k];
            let offload = dev.lambda_e * costs.devices[k].energy + dev.lambda_t * costs.devices[k].delay;
            let local = dev.lambda_e * consts.e_loc[k] + dev.lambda_t * consts.t_loc[k];
            offload - local
        })
    })
}

fn candidates(scenario: &Scenario) -> Vec<bool> {
    (0..scenario.num_devices())
        .map(|k| scenario.edge_time(k) < scenario.devices[k].tau_max)
        .collect()
}

/// Equal bandwidth split among the offloaders; uploads run in parallel and
/// edge processing starts once the slowest one has arrived.
fn fdma_configuration(scenario: &Scenario, offload: &[bool]) -> (CostBreakdown, Vec<f64>) {
    let n_o = offload.iter().filter(|&&o| o).count().max(1) as f64;
    let sub_band = scenario.config.bandwidth / n_o;
    let rates: Vec<f64> = (0..offload.len())
        .map(|k| {
            if offload[k] {
                // Noise scales with the sub-band: SNR grows by N_o.
                sub_band * (1.0 + n_o * full_band_snr(scenario, k)).log2()
            } else {
                0.0
            }
        })
        .collect();
    let tx: Vec<Option<f64>> = (0..offload.len())
        .map(|k| offload[k].then(|| scenario.devices[k].task_bits / rates[k]))
        .collect();
    let wait = tx.iter().flatten().fold(0.0, |a: f64, &b| a.max(b));
    (baseline_costs(scenario, &tx, wait), rates)
}

pub fn run_fdma(scenario: &Scenario) -> SchemeResult {
    let mut offload = candidates(scenario);
    let mut moved = Vec::new();
    loop {
        let (costs, rates) = fdma_configuration(scenario, &offload);
        let set: Vec<usize> = (0..offload.len()).filter(|&k| offload[k]).collect();
        match worst_offloader(scenario, &costs, &set) {
            Some(k) => {
                offload[k] = false;
                moved.push(k);
            }
            None => {
                return SchemeResult {
                    scheme: Scheme::Fdma,
                    decision: OffloadDecision::from_bits(offload),
                    costs,
                    rates,
                    iterations: 0,
                    moved,
                }
            }
        }
    }
}

/// Uploads one after another over the full band; every offloader waits for
/// the whole schedule.
fn tdma_configuration(scenario: &Scenario, offload: &[bool], rates: &[f64]) -> CostBreakdown {
    let tx: Vec<Option<f64>> = (0..offload.len())
        .map(|k| offload[k].then(|| scenario.devices[k].task_bits / rates[k]))
        .collect();
    let wait = tx.iter().flatten().sum();
    baseline_costs(scenario, &tx, wait)
}

pub fn run_tdma(scenario: &Scenario) -> SchemeResult {
    let k = scenario.num_devices();
    let bw = scenario.config.bandwidth;
    let full_rates: Vec<f64> = (0..k).map(|i| bw * (1.0 + full_band_snr(scenario, i)).log2()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let ta = scenario.devices[a].task_bits / full_rates[a];
        let tb = scenario.devices[b].task_bits / full_rates[b];
        ta.total_cmp(&tb).then(a.cmp(&b))
    });
    let mut offload = candidates(scenario);
    let mut moved = Vec::new();
    loop {
        let costs = tdma_configuration(scenario, &offload, &full_rates);
        let violated = (0..k).any(|i| offload[i] && costs.delay_violations.contains(&i));
        let set: Vec<usize> = (0..k).filter(|&i| offload[i]).collect();
        let drop = if violated {
            order.iter().rev().copied().find(|&i| offload[i])
        } else {
            worst_offloader(scenario, &costs, &set)
        };
        match drop {
            Some(i) => {
                offload[i] = false;
                moved.push(i);
            }
            None => {
                let rates = (0..k).map(|i| if offload[i] { full_rates[i] } else { 0.0 }).collect();
                return SchemeResult {
                    scheme: Scheme::Tdma,
                    decision: OffloadDecision::from_bits(offload),
                    costs,
                    rates,
                    iterations: 0,
                    moved,
                };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::C64;
    use crate::scenario::{generate_scenario, ScenarioConfig};
    use crate::system_model::{local_cost, rate_upper_bound, Mode};

    fn cell(k: usize, seed: u64) -> Scenario {
        generate_scenario(&ScenarioConfig {
            num_devices: k,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn local_only_matches_direct_formulas() {
        let s = cell(3, 1);
        let r = run_local_only(&s);
        let mut total = 0.0;
        for (k, dev) in s.devices.iter().enumerate() {
            let (e, t) = local_cost(dev, s.config.alpha, s.config.kappa);
            assert_eq!(r.costs.devices[k].energy, e);
            assert_eq!(r.costs.devices[k].delay, t);
            total += dev.lambda_e * e + dev.lambda_t * t;
        }
        assert!((r.costs.total - total).abs() <= 1e-12 * total);
        assert_eq!(r.costs.total, r.costs.eta);
        // Defaults put every local execution past the deadline.
        assert!(!r.feasible());
    }

    #[test]
    fn local_only_ignores_channels() {
        let s = cell(3, 2);
        let mut t = s.clone();
        t.channels.h.iter_mut().for_each(|h| h.fill(C64::new(0.0, 0.0)));
        assert_eq!(run_local_only(&s), run_local_only(&t));
    }

    #[test]
    fn scheme_ids_round_trip() {
        for sc in Scheme::ALL {
            assert_eq!(sc.id().parse::<Scheme>().unwrap(), sc);
        }
        assert!("mmse".parse::<Scheme>().is_err());
    }

    #[test]
    fn fdma_sub_band_rate() {
        let s = cell(4, 3);
        let all = vec![true; 4];
        let (_, rates) = fdma_configuration(&s, &all);
        let snr = full_band_snr(&s, 2);
        let want = s.config.bandwidth / 4.0 * (1.0 + 4.0 * snr).log2();
        assert!((rates[2] - want).abs() <= 1e-9 * want);
        let (_, two) = fdma_configuration(&s, &[true, false, true, false]);
        let want2 = s.config.bandwidth / 2.0 * (1.0 + 2.0 * snr).log2();
        assert!((two[2] - want2).abs() <= 1e-9 * want2);
    }

    #[test]
    fn single_offloader_tdma_equals_fdma() {
        let mut s = cell(1, 4);
        s.devices[0].tau_max = 10.0;
        let f = run_fdma(&s);
        let t = run_tdma(&s);
        assert!(f.decision.offload[0] && t.decision.offload[0]);
        assert!((f.rates[0] - t.rates[0]).abs() <= 1e-9 * f.rates[0]);
        assert!((f.costs.total - t.costs.total).abs() <= 1e-12 * f.costs.total);
    }

    #[test]
    fn tdma_waits_grow_with_offloaders() {
        let s = cell(4, 5);
        let k = 4;
        let rates: Vec<f64> = (0..k)
            .map(|i| s.config.bandwidth * (1.0 + full_band_snr(&s, i)).log2())
            .collect();
        let mut offload = vec![false; k];
        let mut prev = vec![0.0; k];
        for i in 0..k {
            offload[i] = true;
            let c = tdma_configuration(&s, &offload, &rates);
            for j in 0..=i {
                assert!(c.devices[j].delay >= prev[j]);
                prev[j] = c.devices[j].delay;
            }
        }
    }

    #[test]
    fn fdma_greedy_settles_within_k_moves() {
        for seed in 0..10 {
            let mut s = cell(8, 10 + seed);
            for d in &mut s.devices {
                d.tau_max = 2.4;
            }
            let r = run_fdma(&s);
            assert!(r.moved.len() <= 8);
            for k in r.decision.offload_set() {
                assert!(r.costs.devices[k].delay <= s.devices[k].tau_max + 1e-9);
            }
        }
    }

    #[test]
    fn tdma_keeps_fewer_offloaders_when_crowded() {
        let (mut tdma, mut fdma) = (0, 0);
        for seed in 0..20 {
            let s = cell(8, 100 + seed);
            tdma += run_tdma(&s).decision.num_offloaders();
            fdma += run_fdma(&s).decision.num_offloaders();
        }
        assert!(tdma < fdma, "tdma {tdma} fdma {fdma}");
        let (mut tdma, mut fdma) = (0, 0);
        for seed in 0..20 {
            let s = cell(2, 100 + seed);
            tdma += run_tdma(&s).decision.num_offloaders();
            fdma += run_fdma(&s).decision.num_offloaders();
        }
        assert!(tdma <= fdma + 1, "tdma {tdma} fdma {fdma}");
    }

    #[test]
    fn op_mmse_single_device_stays_within_bounds() {
        let s = cell(1, 6);
        let r = run_op_mmse(&s).unwrap();
        let single = s.single_antenna();
        let bound = rate_upper_bound(
            &single.channels.h[0],
            s.config.p_max,
            1,
            s.config.bandwidth,
            s.channels.noise_power,
        );
        assert!(r.rates[0] <= bound * (1.0 + 1e-9));
        if r.costs.devices[0].mode == Mode::Offload {
            let p = (r.costs.devices[0].energy - s.devices[0].p_idle * s.edge_time(0)) * r.rates[0]
                / s.devices[0].task_bits;
            assert!(p <= s.config.p_max * (1.0 + 1e-9));
        }
    }

    #[test]
    fn joint_pipeline_is_never_worse_than_feasible_local() {
        for seed in 0..5 {
            let mut s = cell(3, 20 + seed);
            for d in &mut s.devices {
                d.f_loc *= 4.0;
                d.tau_max = 4.0;
            }
            let local = run_local_only(&s);
            let joint = run_dm_mmco(&s).unwrap();
            if joint.feasible() && local.feasible() {
                assert!(joint.costs.total <= local.costs.total);
            }
        }
    }

    #[test]
    fn dm_mmco_beats_single_antenna_on_defaults() {
        let s = cell(4, 7);
        let dm = run_dm_mmco(&s).unwrap();
        let op = run_op_mmse(&s).unwrap();
        assert!(dm.feasible());
        assert!(dm.costs.total_energy() < op.costs.total_energy());
    }
}
