//! Exhaustive search over offloading decisions, sharing the beamformer design
//! with the joint scheme. Reference for tests only.

use rayon::prelude::*;

use crate::beamforming::{solve_beamforming, BeamformingSolution};
use crate::error::OracleError;
use crate::scenario::Scenario;
use crate::system_model::{assemble_costs, cost_constants, total_cost, CostBreakdown, OffloadDecision};

pub const MAX_ORACLE_DEVICES: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub decision: OffloadDecision,
    pub solution: Option<BeamformingSolution>,
    pub costs: CostBreakdown,
    /// Decision vectors that admitted a delay-feasible configuration.
    pub feasible_decisions: usize,
}

impl OracleSolution {
    /// Cost relative to running everything locally.
    pub fn decision_objective(&self) -> f64 {
        self.costs.total - self.costs.eta
    }
}

type Candidate = (OffloadDecision, Option<BeamformingSolution>, CostBreakdown);

fn evaluate(scenario: &Scenario, mask: u32) -> Option<Candidate> {
    let k = scenario.num_devices();
    let consts = cost_constants(scenario);
    let offload: Vec<bool> = (0..k).map(|i| mask >> i & 1 == 1).collect();
    if (0..k).any(|i| !offload[i] && consts.t_loc[i] > scenario.devices[i].tau_max + 1e-9) {
        return None;
    }
    let decision = OffloadDecision::from_bits(offload);
    let set = decision.offload_set();
    if set.is_empty() {
        let costs = assemble_costs(scenario, &vec![None; k]);
        return costs.is_feasible().then_some((decision, None, costs));
    }
    let sol = solve_beamforming(scenario, &set).ok().filter(|s| s.delay_feasible)?;
    let costs = total_cost(scenario, &decision, &sol.beams).ok()?;
    costs.is_feasible().then_some((decision, Some(sol), costs))
}

/// Cheapest delay-feasible configuration over all `2^K` decision vectors;
/// ties go to the vector with the lower bit pattern.
pub fn brute_force_optimal(scenario: &Scenario) -> Result<OracleSolution, OracleError> {
    let k = scenario.num_devices();
    if k > MAX_ORACLE_DEVICES {
        return Err(OracleError::TooLarge(k));
    }
    let found: Vec<(u32, Candidate)> = (0..1u32 << k)
        .into_par_iter()
        .filter_map(|mask| evaluate(scenario, mask).map(|c| (mask, c)))
        .collect();
    let feasible_decisions = found.len();
    let (_, (decision, solution, costs)) = found
        .into_iter()
        .min_by(|a, b| a.1 .2.total.total_cmp(&b.1 .2.total).then(a.0.cmp(&b.0)))
        .ok_or(OracleError::NoFeasibleConfiguration)?;
    Ok(OracleSolution {
        decision,
        solution,
        costs,
        feasible_decisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::run_dm_mmco;
    use crate::scenario::{generate_scenario, ScenarioConfig};

    fn cell(k: usize, seed: u64) -> Scenario {
        generate_scenario(&ScenarioConfig {
            num_devices: k,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn rejects_large_cells() {
        let s = cell(13, 1);
        assert_eq!(brute_force_optimal(&s).unwrap_err(), OracleError::TooLarge(13));
    }

    #[test]
    fn single_device_without_power_stays_local() {
        let mut s = cell(1, 2);
        s.devices[0].tau_max = 100.0;
        s.devices[0].p_max = 1e-30;
        s.devices[0].f_loc *= 5.0;
        let out = brute_force_optimal(&s).unwrap();
        assert_eq!(out.decision.offload, vec![false]);
    }

    #[test]
    fn never_worse_than_all_local_or_the_joint_scheme() {
        for seed in 0..3 {
            let mut s = cell(2, 30 + seed);
            for d in &mut s.devices {
                d.f_loc *= 3.0;
                d.tau_max = 4.0;
            }
            let out = brute_force_optimal(&s).unwrap();
            assert!(out.costs.total <= out.costs.eta + 1e-12);
            let joint = run_dm_mmco(&s).unwrap();
            assert!(out.costs.total <= joint.costs.total * (1.0 + 1e-9));
        }
    }

    #[test]
    fn impossible_cell_has_no_configuration() {
        let mut s = cell(2, 4);
        for d in &mut s.devices {
            d.tau_max = 0.5;
        }
        assert_eq!(brute_force_optimal(&s).unwrap_err(), OracleError::NoFeasibleConfiguration);
    }
}
