//! Alternating fractional-programming design of transmit and receive
//! beamformers for a fixed offloading set.
//!
//! Each iteration refreshes the auxiliary variables `z` (per stream) and `w`
//! (per device) in closed form, then improves `Q` with a convex transmit
//! subproblem and `V` with per-stream MMSE receivers.

mod repair;
mod solve;
mod state;
mod transmit;

pub use repair::{best_effort, feasibility_repair, RepairOutcome};
pub use solve::{solve_beamforming, solve_beamforming_with, BeamformingSolution};
pub use state::{
    evaluate_fqm, init_beamformers, stream_brackets, transmit_cost, update_v, update_w, update_z, FpContext,
    FpState,
};
pub use transmit::{update_q_matrices, QStep, QSubproblem};

use crate::scenario::ScenarioConfig;

/// Knobs of the alternating loop and of the transmit subproblem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpOptions {
    /// Stop once successive objective values differ by less than this
    /// fraction of the previous value.
    pub epsilon: f64,
    pub numiter: usize,
    /// Projected-gradient stationarity tolerance of the transmit subproblem.
    pub tol_inner: f64,
    /// Cap on projected-gradient steps per barrier round.
    pub max_inner: usize,
    /// Initial barrier weight; shrunk by `barrier_shrink` each round.
    pub barrier_start: f64,
    pub barrier_shrink: f64,
    pub barrier_rounds: usize,
}

impl Default for FpOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            numiter: 100,
            tol_inner: 1e-6,
            max_inner: 1000,
            barrier_start: 1e-2,
            barrier_shrink: 0.2,
            barrier_rounds: 3,
        }
    }
}

impl FpOptions {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        Self {
            epsilon: config.epsilon,
            numiter: config.numiter,
            ..Self::default()
        }
    }
}
