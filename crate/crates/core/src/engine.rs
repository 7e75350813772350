//! Batch pipeline: screening, network, pruning, combinations, assignment.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::{assemble_result, build_problem, solve_assignment, AssignmentProblem, MatchResult, Solution};
use crate::combos::{generate_all, ComboStats, Combination};
use crate::dtree::RoutingContext;
use crate::model::{EngineConfig, Instance, ModelError};
use crate::network::{screen_participants, NetworkError, PdNetwork, Travel};
use crate::pruning::{all_candidates, pruning_speed};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Wall-clock time per stage, milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub prep_ms: f64,
    pub combo_ms: f64,
    pub ilp_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug)]
pub struct BatchRun {
    /// The instance after unreachable participants were removed; every index
    /// below refers to it.
    pub instance: Instance,
    pub pd: PdNetwork,
    pub candidates: Vec<Vec<usize>>,
    pub combinations: Vec<Combination>,
    pub combo_stats: ComboStats,
    pub problem: AssignmentProblem,
    pub solution: Solution,
    pub result: MatchResult,
    pub timings: StageTimings,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

pub fn run_batch(travel: &Travel, instance: &Instance, config: &EngineConfig) -> Result<BatchRun, EngineError> {
    config.validate()?;
    instance.validate()?;
    let start = Instant::now();
    let (instance, rejected) = screen_participants(travel, instance)?;
    let pd = PdNetwork::build(travel, &instance)?;
    let v_max = pruning_speed(config, travel.max_speed());
    let candidates = all_candidates(&instance, &pd, config, v_max);
    let prep = start.elapsed();

    let ctx = RoutingContext::new(&instance, &pd, config.eps);
    let t = Instant::now();
    let (combinations, combo_stats) = generate_all(&ctx, &candidates, config.max_combo_size, config.threads);
    let combo = t.elapsed();

    let t = Instant::now();
    let problem = build_problem(&pd, &combinations);
    let solution = solve_assignment(&problem);
    let ilp = t.elapsed();

    let result = assemble_result(&ctx, &problem, &combinations, &solution, &candidates, rejected);
    let total = start.elapsed();
    let timings = StageTimings { prep_ms: ms(prep), combo_ms: ms(combo), ilp_ms: ms(ilp), total_ms: ms(total) };
    Ok(BatchRun { instance, pd, candidates, combinations, combo_stats, problem, solution, result, timings })
}
