//! Shared inputs for the benchmarks.

use mecoff_core::scenario::{generate_scenario, Scenario, ScenarioConfig};

/// A default-parameter cell with `k` devices.
pub fn cell(k: usize, seed: u64) -> Scenario {
    generate_scenario(&ScenarioConfig {
        num_devices: k,
        seed,
        ..Default::default()
    })
    .expect("default configuration is valid")
}
