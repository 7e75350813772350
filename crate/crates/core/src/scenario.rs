//! Seeded grid instances, replication sweeps and JSON file IO.
//!
//! Coordinates are drawn with `ChaCha8Rng::seed_from_u64(seed)`, uniform on
//! the square `[-half_width, half_width]²`. Drivers get ids `0..D`,
//! passengers `D..D+P`.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{run_batch, EngineError};
use crate::model::{default_constraints, Driver, EngineConfig, Instance, Location, ModelError, PassengerRequest, Point};
use crate::network::{direct_trips, NetworkError, RoadNetwork, RoadNetworkFile, Travel};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{0}")]
    Params(String),
}

/// How Δ and Ω are set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConstraintMode {
    /// Fixed grid limits: a driver may travel at most
    /// `min(max_travel_time, max_distance / speed)` minutes, a passenger at
    /// most `max_travel_time`; Δ is that limit minus the direct time, and
    /// every passenger waits at most `max_wait`.
    Limits,
    /// Δ = excess·τ for everyone and Ω = wait·Δ for passengers (fractions).
    Proportional { excess: f64, wait: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScenarioParams {
    pub seed: u64,
    pub drivers: usize,
    pub passengers: usize,
    pub half_width: f64,
    pub depot: Point,
    pub capacity: u32,
    /// Minutes.
    pub max_travel_time: f64,
    /// Minutes.
    pub max_wait: f64,
    /// km.
    pub max_distance: f64,
    pub speed_kmh: f64,
    /// All drivers start and end at the depot; otherwise driver origins and
    /// destinations are drawn like the passengers'.
    pub common_depot: bool,
    pub constraints: ConstraintMode,
}

impl Default for GridScenarioParams {
    fn default() -> Self {
        GridScenarioParams {
            seed: 0,
            drivers: 4,
            passengers: 10,
            half_width: 10.0,
            depot: Point::new(0.0, 0.0),
            capacity: 3,
            max_travel_time: 240.0,
            max_wait: 15.0,
            max_distance: 30.0,
            speed_kmh: 60.0,
            common_depot: true,
            constraints: ConstraintMode::Limits,
        }
    }
}

impl GridScenarioParams {
    /// Scattered driver trips with proportional constraints.
    pub fn scattered(seed: u64, drivers: usize, passengers: usize, excess: f64, wait: f64) -> Self {
        GridScenarioParams {
            seed,
            drivers,
            passengers,
            common_depot: false,
            constraints: ConstraintMode::Proportional { excess, wait },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.half_width > 0.0) {
            return Err(ScenarioError::Params(format!("half width must be positive, got {}", self.half_width)));
        }
        if !(self.speed_kmh > 0.0) {
            return Err(ScenarioError::Params(format!("speed must be positive, got {}", self.speed_kmh)));
        }
        if self.capacity == 0 {
            return Err(ScenarioError::Params("capacity must be >= 1".into()));
        }
        Ok(())
    }

    pub fn travel(&self) -> Travel {
        Travel::Euclidean { speed_kmh: self.speed_kmh }
    }
}

pub fn generate_grid(params: &GridScenarioParams) -> Result<Instance, ScenarioError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let h = params.half_width;
    let draw = |rng: &mut ChaCha8Rng| Point::new(rng.random_range(-h..=h), rng.random_range(-h..=h));
    let mut inst = Instance { batch_id: params.seed, ..Default::default() };
    for i in 0..params.drivers {
        let (o, d) = if params.common_depot { (params.depot, params.depot) } else { (draw(&mut rng), draw(&mut rng)) };
        inst.drivers.push(Driver {
            id: i as u32,
            origin: Location::Point(o),
            destination: Location::Point(d),
            t_ed: 0.0,
            capacity: params.capacity,
            max_excess: 0.0,
        });
    }
    for k in 0..params.passengers {
        let (o, d) = (draw(&mut rng), draw(&mut rng));
        inst.passengers.push(PassengerRequest {
            id: (params.drivers + k) as u32,
            pickup: Location::Point(o),
            dropoff: Location::Point(d),
            t_ed: 0.0,
            max_excess: 0.0,
            max_wait: 0.0,
            party: 1,
        });
    }
    let trips = direct_trips(&params.travel(), &inst)?;
    let tau = |c: &Option<crate::network::PathCost>| c.map_or(0.0, |c| c.time);
    let driver_tau: Vec<f64> = trips.drivers.iter().map(tau).collect();
    let passenger_tau: Vec<f64> = trips.passengers.iter().map(tau).collect();
    match params.constraints {
        ConstraintMode::Limits => {
            let driver_limit = params.max_travel_time.min(params.max_distance / params.speed_kmh * 60.0);
            for (d, t) in inst.drivers.iter_mut().zip(&driver_tau) {
                d.max_excess = (driver_limit - t).max(0.0);
            }
            for (p, t) in inst.passengers.iter_mut().zip(&passenger_tau) {
                p.max_excess = (params.max_travel_time - t).max(0.0);
                p.max_wait = params.max_wait;
            }
            Ok(inst)
        }
        ConstraintMode::Proportional { excess, wait } => {
            Ok(default_constraints(&inst, &driver_tau, &passenger_tau, excess, wait))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    /// Drivers per passenger; the participant total stays fixed.
    DriverRatio,
    /// Δ as a fraction of the direct time (forces proportional constraints).
    ExcessPct,
    Capacity,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::DriverRatio => "driver_ratio",
            SweepAxis::ExcessPct => "excess_pct",
            SweepAxis::Capacity => "capacity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub seed: u64,
    pub prep_ms: f64,
    pub combo_ms: f64,
    pub ilp_ms: f64,
    pub total_ms: f64,
    pub n_combos: usize,
    pub z_km: f64,
    pub match_rate: f64,
    pub prune_strength: f64,
    pub mean_delta_v: f64,
    pub mean_delta_r: f64,
    pub mean_omega_r: f64,
}

/// Parameters of one sweep point.
pub fn apply_axis(base: &GridScenarioParams, axis: SweepAxis, value: f64) -> Result<GridScenarioParams, ScenarioError> {
    let mut p = base.clone();
    match axis {
        SweepAxis::DriverRatio => {
            if !(value > 0.0) {
                return Err(ScenarioError::Params(format!("driver ratio must be positive, got {value}")));
            }
            let total = (base.drivers + base.passengers) as f64;
            p.drivers = (total * value / (1.0 + value)).round() as usize;
            p.passengers = base.drivers + base.passengers - p.drivers;
        }
        SweepAxis::ExcessPct => {
            let wait = match base.constraints {
                ConstraintMode::Proportional { wait, .. } => wait,
                ConstraintMode::Limits => 0.5,
            };
            p.constraints = ConstraintMode::Proportional { excess: value / 100.0, wait };
        }
        SweepAxis::Capacity => {
            if !(value >= 1.0) || value.fract() != 0.0 {
                return Err(ScenarioError::Params(format!("capacity must be a positive integer, got {value}")));
            }
            p.capacity = value as u32;
        }
    }
    Ok(p)
}

/// One row per (axis value, replication). Replication r uses seed
/// `base.seed + r`. With `workers > 1` replications run concurrently, which
/// perturbs the timing columns but nothing else.
pub fn run_sweep(
    spec: &SweepSpec,
    base: &GridScenarioParams,
    config: &EngineConfig,
    workers: usize,
) -> Result<Vec<SweepRow>, ScenarioError> {
    if spec.replications == 0 {
        return Err(ScenarioError::Params("replications must be >= 1".into()));
    }
    let mut jobs = Vec::new();
    for &value in &spec.values {
        let params = apply_axis(base, spec.axis, value)?;
        for r in 0..spec.replications {
            let mut p = params.clone();
            p.seed = base.seed + r as u64;
            jobs.push((value, p));
        }
    }
    let run = |(value, p): &(f64, GridScenarioParams)| -> Result<SweepRow, ScenarioError> {
        let inst = generate_grid(p)?;
        let out = run_batch(&p.travel(), &inst, config)?;
        let m = &out.result.metrics;
        Ok(SweepRow {
            axis: spec.axis.name().to_string(),
            value: *value,
            seed: p.seed,
            prep_ms: out.timings.prep_ms,
            combo_ms: out.timings.combo_ms,
            ilp_ms: out.timings.ilp_ms,
            total_ms: out.timings.total_ms,
            n_combos: out.combinations.len(),
            z_km: out.result.objective_km,
            match_rate: m.match_rate,
            prune_strength: m.prune_strength,
            mean_delta_v: m.mean_delta_v,
            mean_delta_r: m.mean_delta_r,
            mean_omega_r: m.mean_omega_r,
        })
    };
    let rows: Vec<Result<SweepRow, ScenarioError>> = if workers <= 1 {
        jobs.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| ScenarioError::Params(e.to_string()))?;
        pool.install(|| jobs.par_iter().map(run).collect())
    };
    rows.into_iter().collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record([
            "axis", "value", "seed", "prep_ms", "combo_ms", "ilp_ms", "total_ms", "n_combos", "z_km",
            "match_rate", "prune_strength", "mean_delta_v", "mean_delta_r", "mean_omega_r",
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Instance file as written by hand: Δ and Ω may be left out.
#[derive(Debug, Clone, Deserialize)]
struct InstanceFile {
    #[serde(default)]
    batch_id: u64,
    drivers: Vec<DriverFile>,
    passengers: Vec<PassengerFile>,
}

#[derive(Debug, Clone, Deserialize)]
struct DriverFile {
    id: u32,
    o: Location,
    d: Location,
    #[serde(default)]
    t_ed: f64,
    cap: u32,
    delta: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
struct PassengerFile {
    id: u32,
    o: Location,
    d: Location,
    #[serde(default)]
    t_ed: f64,
    delta: Option<f64>,
    omega: Option<f64>,
    #[serde(default = "one")]
    q: u32,
}

fn one() -> u32 {
    1
}

/// Parse an instance. Missing Δ values become `excess`·τ and missing Ω
/// values become `wait`·Δ.
pub fn read_instance<R: Read>(reader: R, travel: &Travel, excess: f64, wait: f64) -> Result<Instance, ScenarioError> {
    let file: InstanceFile = serde_json::from_reader(reader)?;
    let mut inst = Instance {
        batch_id: file.batch_id,
        drivers: file
            .drivers
            .iter()
            .map(|d| Driver {
                id: d.id,
                origin: d.o,
                destination: d.d,
                t_ed: d.t_ed,
                capacity: d.cap,
                max_excess: d.delta.unwrap_or(0.0),
            })
            .collect(),
        passengers: file
            .passengers
            .iter()
            .map(|p| PassengerRequest {
                id: p.id,
                pickup: p.o,
                dropoff: p.d,
                t_ed: p.t_ed,
                max_excess: p.delta.unwrap_or(0.0),
                max_wait: p.omega.unwrap_or(0.0),
                party: p.q,
            })
            .collect(),
    };
    let incomplete = file.drivers.iter().any(|d| d.delta.is_none())
        || file.passengers.iter().any(|p| p.delta.is_none() || p.omega.is_none());
    if incomplete {
        let trips = direct_trips(travel, &inst)?;
        let tau = |c: &Option<crate::network::PathCost>| c.map_or(0.0, |c| c.time);
        let dt: Vec<f64> = trips.drivers.iter().map(tau).collect();
        let pt: Vec<f64> = trips.passengers.iter().map(tau).collect();
        let filled = default_constraints(&inst, &dt, &pt, excess, wait);
        for (k, d) in file.drivers.iter().enumerate() {
            if d.delta.is_none() {
                inst.drivers[k].max_excess = filled.drivers[k].max_excess;
            }
        }
        for (k, p) in file.passengers.iter().enumerate() {
            if p.delta.is_none() {
                inst.passengers[k].max_excess = filled.passengers[k].max_excess;
            }
            if p.omega.is_none() {
                inst.passengers[k].max_wait = wait * inst.passengers[k].max_excess;
            }
        }
    }
    inst.validate()?;
    Ok(inst)
}

pub fn load_instance(path: &Path, travel: &Travel, excess: f64, wait: f64) -> Result<Instance, ScenarioError> {
    read_instance(std::fs::File::open(path)?, travel, excess, wait)
}

pub fn save_instance(path: &Path, instance: &Instance) -> Result<(), ScenarioError> {
    let text = serde_json::to_string_pretty(instance)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<RoadNetwork, ScenarioError> {
    let file: RoadNetworkFile = serde_json::from_reader(std::fs::File::open(path)?)?;
    Ok(RoadNetwork::from_file(file)?)
}
