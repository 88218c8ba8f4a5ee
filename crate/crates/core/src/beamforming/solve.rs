use log::debug;

use super::state::{evaluate_fqm, init_beamformers, transmit_cost, update_v, update_z, FpContext, FpState};
use super::transmit::{update_q_matrices, QSubproblem};
use super::FpOptions;
use crate::error::BeamformingError;
use crate::numerics::{CMat, C64};
use crate::scenario::Scenario;
use crate::system_model::Beamformers;

const MAX_RESTORE_ROUNDS: usize = 25;
const MAX_SEGMENT_HALVINGS: usize = 40;

/// Beamformers of the offloading set and the loop diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingSolution {
    pub devices: Vec<usize>,
    pub beams: Beamformers,
    pub z: Vec<Vec<C64>>,
    pub w: Vec<f64>,
    /// Common upload time `max_k B_k / R_k`, seconds.
    pub q: f64,
    pub rates: Vec<f64>,
    /// Transmission cost of the returned iterate.
    pub objective: f64,
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Every offloader finishes within its deadline.
    pub delay_feasible: bool,
}

impl BeamformingSolution {
    pub(crate) fn from_state(ctx: &FpContext, state: &FpState, converged: bool) -> Result<Self, BeamformingError> {
        let rates = ctx.rates(&state.beams)?;
        let q = (0..ctx.len())
            .map(|p| ctx.device(p).task_bits / rates[p])
            .fold(0.0, f64::max);
        let objective = transmit_cost(ctx, &state.beams).unwrap_or(f64::INFINITY);
        Ok(Self {
            devices: ctx.devices.clone(),
            beams: state.beams.clone(),
            z: state.z.clone(),
            w: state.w.clone(),
            q,
            rates,
            objective,
            history: state.history.clone(),
            iterations: state.iteration,
            converged,
            delay_feasible: q <= ctx.q_max + 1e-9,
        })
    }
}

/// Devices (by index) whose rate misses the common upload budget.
pub(crate) fn late_devices(ctx: &FpContext, rates: &[f64]) -> Vec<usize> {
    (0..ctx.len())
        .filter(|&p| !(rates[p] * ctx.q_max > ctx.device(p).task_bits))
        .map(|p| ctx.devices[p])
        .collect()
}

fn shortfall(ctx: &FpContext, rates: &[f64]) -> f64 {
    (0..ctx.len())
        .map(|p| (1.0 - rates[p] * ctx.q_max / ctx.device(p).task_bits).max(0.0))
        .sum()
}

/// Alternates phase-one transmit passes with receiver updates until every
/// offloader meets the upload budget.
pub(crate) fn restore_deadlines(
    state: &mut FpState,
    ctx: &FpContext,
    opts: &FpOptions,
) -> Result<(), BeamformingError> {
    if !(ctx.q_max > 0.0) {
        return Err(BeamformingError::InnerInfeasible {
            devices: ctx.hopeless_devices(),
        });
    }
    let mut rates = ctx.rates(&state.beams)?;
    let mut short = shortfall(ctx, &rates);
    for round in 0..MAX_RESTORE_ROUNDS {
        if late_devices(ctx, &rates).is_empty() {
            return Ok(());
        }
        update_z(state, ctx)?;
        let sub = QSubproblem::new(state, ctx);
        let (q, _) = sub.restore(state, opts);
        state.beams.q = q;
        update_z(state, ctx)?;
        update_v(state, ctx)?;
        rates = ctx.rates(&state.beams)?;
        let next = shortfall(ctx, &rates);
        debug!("deadline restoration round {round}: shortfall {short:e} -> {next:e}");
        if !(next < short * (1.0 - 1e-9)) && !late_devices(ctx, &rates).is_empty() {
            break;
        }
        short = next;
    }
    if late_devices(ctx, &rates).is_empty() {
        Ok(())
    } else {
        Err(BeamformingError::InnerInfeasible {
            devices: late_devices(ctx, &rates),
        })
    }
}

fn meets_budget(ctx: &FpContext, beams: &Beamformers) -> bool {
    ctx.rates(beams).is_ok_and(|r| late_devices(ctx, &r).is_empty())
}

/// Moves from the current precoders toward `candidate`, halving the step until
/// the transmission cost does not increase. Returns whether anything moved.
fn accept_transmit_step(state: &mut FpState, ctx: &FpContext, candidate: &[CMat], cost_before: f64) -> bool {
    let old = state.beams.q.clone();
    let mut beta = 1.0;
    for _ in 0..MAX_SEGMENT_HALVINGS {
        let mut trial = state.beams.clone();
        trial.q = old
            .iter()
            .zip(candidate)
            .map(|(o, c)| o + (c - o) * C64::new(beta, 0.0))
            .collect();
        if let Ok(cost) = transmit_cost(ctx, &trial) {
            if cost <= cost_before && meets_budget(ctx, &trial) {
                state.beams = trial;
                return true;
            }
        }
        beta *= 0.5;
    }
    false
}

pub fn solve_beamforming(scenario: &Scenario, offload_set: &[usize]) -> Result<BeamformingSolution, BeamformingError> {
    solve_beamforming_with(scenario, offload_set, &FpOptions::from_config(&scenario.config))
}

/// Runs the alternating loop from the SVD initialization.
///
/// One iteration is a transmit update followed by a receive update, each
/// preceded by the closed-form auxiliary refresh. The recorded objective is
/// the surrogate at refreshed auxiliaries, which equals the transmission
/// cost, and the best iterate is returned.
pub fn solve_beamforming_with(
    scenario: &Scenario,
    offload_set: &[usize],
    opts: &FpOptions,
) -> Result<BeamformingSolution, BeamformingError> {
    let ctx = FpContext::new(scenario, offload_set)?;
    let mut state = init_beamformers(&ctx);
    restore_deadlines(&mut state, &ctx, opts)?;
    state.refresh_auxiliaries(&ctx)?;
    let f0 = evaluate_fqm(&state, &ctx)?;
    state.history.push(f0);
    let mut best = (f0, state.clone());
    let mut converged = false;
    let mut prev = f0;

    for n in 1..=opts.numiter {
        state.iteration = n;
        let cost_before = transmit_cost(&ctx, &state.beams)?;
        let step = update_q_matrices(&state, &ctx, opts)?;
        let moved = accept_transmit_step(&mut state, &ctx, &step.q, cost_before);
        debug!(
            "iteration {n}: transmit surrogate {:e} -> {:e} in {} steps, accepted {moved}",
            step.surrogate_start, step.surrogate_end, step.inner_iterations
        );

        state.refresh_auxiliaries(&ctx)?;
        let cost_mid = transmit_cost(&ctx, &state.beams)?;
        let saved = state.beams.v.clone();
        update_v(&mut state, &ctx)?;
        let keep = transmit_cost(&ctx, &state.beams).is_ok_and(|c| c <= cost_mid);
        if !keep {
            state.beams.v = saved;
        }

        state.refresh_auxiliaries(&ctx)?;
        let f = evaluate_fqm(&state, &ctx)?;
        state.history.push(f);
        if f < best.0 {
            best = (f, state.clone());
        }
        // Relative: objective values are a few millijoules, far below any absolute tolerance.
        if (f - prev).abs() < opts.epsilon * prev.abs() {
            converged = true;
            break;
        }
        prev = f;
    }
    let mut out = best.1;
    out.history = state.history;
    out.iteration = state.iteration;
    BeamformingSolution::from_state(&ctx, &out, converged)
}
