//! Shared fixtures for the pipeline benchmarks.

use rideshare_core::model::{EngineConfig, Instance};
use rideshare_core::network::{PdNetwork, Travel};
use rideshare_core::pruning::all_candidates;
use rideshare_core::scenario::{generate_grid, GridScenarioParams};

pub struct Fixture {
    pub travel: Travel,
    pub instance: Instance,
    pub pd: PdNetwork,
    pub candidates: Vec<Vec<usize>>,
}

/// Scattered grid batch with proportional limits.
pub fn scattered(seed: u64, drivers: usize, passengers: usize, excess: f64) -> Fixture {
    build(GridScenarioParams::scattered(seed, drivers, passengers, excess, 0.5))
}

/// Common-depot grid batch.
pub fn depot(seed: u64, drivers: usize, passengers: usize) -> Fixture {
    build(GridScenarioParams { seed, drivers, passengers, ..Default::default() })
}

fn build(p: GridScenarioParams) -> Fixture {
    let travel = p.travel();
    let instance = generate_grid(&p).expect("valid grid parameters");
    let pd = PdNetwork::build(&travel, &instance).expect("euclidean travel");
    let candidates = all_candidates(&instance, &pd, &EngineConfig::default(), p.speed_kmh);
    Fixture { travel, instance, pd, candidates }
}
