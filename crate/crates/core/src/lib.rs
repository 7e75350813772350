//! Batch ride-sharing matcher: passenger-driver network, geometric pruning,
//! dynamic-tree routing, combination generation and exact assignment.

pub mod assign;
pub mod combos;
pub mod dtree;
pub mod engine;
pub mod mipexport;
pub mod model;
pub mod network;
pub mod oracle;
pub mod pruning;
pub mod scenario;

pub use assign::{AssignmentProblem, MatchResult, Metrics};
pub use combos::Combination;
pub use dtree::{DynamicTree, RoutingContext, Schedule, Stop};
pub use engine::{run_batch, BatchRun, EngineError, StageTimings};
pub use model::{Driver, EngineConfig, Instance, Location, PassengerRequest, Point};
pub use network::{PdNetwork, RoadNetwork, Travel};
pub use scenario::{generate_grid, GridScenarioParams};
