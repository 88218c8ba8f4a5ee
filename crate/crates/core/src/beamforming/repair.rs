use log::{debug, info};

use super::solve::{restore_deadlines, solve_beamforming_with, BeamformingSolution};
use super::state::{init_beamformers, update_v, update_z, FpContext};
use super::FpOptions;
use crate::error::BeamformingError;
use crate::scenario::Scenario;
use crate::system_model::{local_cost, rate_upper_bound, total_cost, OffloadDecision};

/// Result of repairing a decision whose offloading set admits no
/// deadline-feasible beamformers.
#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    pub decision: OffloadDecision,
    /// Beamformers for the final offloading set (`None` when it is empty).
    pub solution: Option<BeamformingSolution>,
    /// Devices moved to local computation, in order.
    pub moved: Vec<usize>,
    /// Every device meets its deadline under the returned configuration.
    pub feasible: bool,
}

fn local_feasible(scenario: &Scenario, k: usize) -> bool {
    let cfg = &scenario.config;
    let dev = &scenario.devices[k];
    local_cost(dev, cfg.alpha, cfg.kappa).1 <= dev.tau_max + 1e-9
}

fn configuration_feasible(scenario: &Scenario, decision: &OffloadDecision, sol: Option<&BeamformingSolution>) -> bool {
    match sol {
        Some(s) => total_cost(scenario, decision, &s.beams).is_ok_and(|c| c.is_feasible()),
        None => (0..scenario.num_devices()).all(|k| local_feasible(scenario, k)),
    }
}

/// Moves offloaders back to local computation, largest `B_k / R̂_k` first and
/// only when local computation meets the deadline, until the beamforming
/// loop succeeds. When no device can be moved the remaining set gets a
/// best-effort design and the outcome is flagged infeasible.
pub fn feasibility_repair(
    scenario: &Scenario,
    decision: &OffloadDecision,
    failure: &BeamformingError,
    opts: &FpOptions,
) -> RepairOutcome {
    debug!("repairing decision {:?} after {failure}", decision.offload);
    let cfg = &scenario.config;
    let mut decision = decision.clone();
    let mut moved = Vec::new();
    loop {
        let set = decision.offload_set();
        let candidate = set
            .iter()
            .copied()
            .filter(|&k| local_feasible(scenario, k))
            .map(|k| {
                let cap = rate_upper_bound(
                    &scenario.channels.h[k],
                    scenario.devices[k].p_max,
                    cfg.streams,
                    cfg.bandwidth,
                    scenario.channels.noise_power,
                );
                let load = if cap > 0.0 { scenario.devices[k].task_bits / cap } else { f64::INFINITY };
                (k, load)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        let Some((k, _)) = candidate else {
            info!("no offloader of {set:?} can compute locally in time; keeping a best-effort design");
            let solution = best_effort(scenario, &set, opts);
            let feasible = configuration_feasible(scenario, &decision, solution.as_ref());
            return RepairOutcome {
                decision,
                solution,
                moved,
                feasible,
            };
        };
        decision.offload[k] = false;
        moved.push(k);
        let set = decision.offload_set();
        if set.is_empty() {
            let feasible = configuration_feasible(scenario, &decision, None);
            return RepairOutcome {
                decision,
                solution: None,
                moved,
                feasible,
            };
        }
        match solve_beamforming_with(scenario, &set, opts) {
            Ok(sol) if sol.delay_feasible => {
                let feasible = configuration_feasible(scenario, &decision, Some(&sol));
                return RepairOutcome {
                    decision,
                    solution: Some(sol),
                    moved,
                    feasible,
                };
            }
            Ok(_) => debug!("set {set:?} still misses its upload budget"),
            Err(e) => debug!("set {set:?} still fails: {e}"),
        }
    }
}

/// Beamformers for a set that cannot meet its deadlines: the deadline
/// restoration's last iterate when an upload budget exists, otherwise the
/// initialization with MMSE receivers. `None` only for an empty set.
pub fn best_effort(scenario: &Scenario, offload_set: &[usize], opts: &FpOptions) -> Option<BeamformingSolution> {
    let ctx = FpContext::new(scenario, offload_set).ok()?;
    let mut state = init_beamformers(&ctx);
    if ctx.q_max > 0.0 {
        let _ = restore_deadlines(&mut state, &ctx, opts);
    } else {
        let _ = update_z(&mut state, &ctx).map_err(BeamformingError::from).and_then(|_| update_v(&mut state, &ctx));
    }
    let _ = state.refresh_auxiliaries(&ctx);
    BeamformingSolution::from_state(&ctx, &state, false).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::C64;
    use crate::scenario::{generate_scenario, ScenarioConfig};

    fn cell(k: usize, seed: u64) -> Scenario {
        generate_scenario(&ScenarioConfig {
            num_devices: k,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    fn relax_local(s: &mut Scenario, k: usize) {
        s.devices[k].f_loc *= 10.0;
    }

    #[test]
    fn dead_channel_device_goes_local() {
        let mut s = cell(2, 11);
        for k in 0..2 {
            relax_local(&mut s, k);
        }
        s.channels.h[1].iter_mut().for_each(|x| *x *= C64::new(1e-9, 0.0));
        let decision = OffloadDecision::from_bits(vec![true, true]);
        let err = solve_beamforming_with(&s, &[0, 1], &FpOptions::default()).unwrap_err();
        let out = feasibility_repair(&s, &decision, &err, &FpOptions::default());
        assert_eq!(out.moved, vec![1]);
        assert_eq!(out.decision.offload, vec![true, false]);
        assert!(out.feasible);
        assert!(out.solution.unwrap().delay_feasible);
    }

    #[test]
    fn devices_that_cannot_compute_in_time_stay_offloaded() {
        let mut s = cell(2, 12);
        // Device 0 could go local, device 1 could not; both uplinks are hopeless.
        relax_local(&mut s, 0);
        for k in 0..2 {
            s.devices[k].task_bits *= 1.0;
            s.channels.h[k].iter_mut().for_each(|x| *x *= C64::new(1e-9, 0.0));
        }
        let cfg = &s.config;
        assert!(local_cost(&s.devices[1], cfg.alpha, cfg.kappa).1 > s.devices[1].tau_max);
        let decision = OffloadDecision::from_bits(vec![true, true]);
        let err = solve_beamforming_with(&s, &[0, 1], &FpOptions::default()).unwrap_err();
        let out = feasibility_repair(&s, &decision, &err, &FpOptions::default());
        assert_eq!(out.moved, vec![0]);
        assert!(out.decision.offload[1]);
        assert!(!out.feasible);
        let sol = out.solution.unwrap();
        assert!(!sol.delay_feasible);
        assert_eq!(sol.devices, vec![1]);
    }

    #[test]
    fn repaired_cost_beats_flagged_design() {
        let mut s = cell(3, 13);
        for k in 0..3 {
            relax_local(&mut s, k);
        }
        s.channels.h[2].iter_mut().for_each(|x| *x *= C64::new(1e-7, 0.0));
        let decision = OffloadDecision::from_bits(vec![true, true, true]);
        let opts = FpOptions::default();
        let err = solve_beamforming_with(&s, &[0, 1, 2], &opts).unwrap_err();
        let flagged = best_effort(&s, &[0, 1, 2], &opts).unwrap();
        let flagged_cost = total_cost(&s, &decision, &flagged.beams).unwrap();
        assert!(!flagged_cost.is_feasible());
        let out = feasibility_repair(&s, &decision, &err, &opts);
        assert!(out.feasible);
        let repaired = match &out.solution {
            Some(sol) => total_cost(&s, &out.decision, &sol.beams).unwrap().total,
            None => cost_all_local(&s),
        };
        assert!(repaired <= flagged_cost.total, "{repaired} vs {}", flagged_cost.total);
    }

    fn cost_all_local(s: &Scenario) -> f64 {
        crate::system_model::cost_constants(s).eta
    }

    #[test]
    fn best_effort_without_budget_still_returns_beams() {
        let mut s = cell(1, 14);
        s.devices[0].tau_max = 0.1;
        let sol = best_effort(&s, &[0], &FpOptions::default()).unwrap();
        assert!(!sol.delay_feasible);
        assert!(sol.rates[0] > 0.0);
        assert!(best_effort(&s, &[], &FpOptions::default()).is_none());
    }
}
