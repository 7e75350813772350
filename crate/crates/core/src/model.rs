//! Participants, batch instances and engine configuration.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Planar coordinate in kilometres. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Where a participant starts or ends: a road-network node id, or a free
/// coordinate for instances without a road graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Location {
    Node(u32),
    Point(Point),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Driver {
    pub id: u32,
    #[serde(rename = "o")]
    pub origin: Location,
    #[serde(rename = "d")]
    pub destination: Location,
    /// Earliest (and actual) departure time, minutes.
    pub t_ed: f64,
    #[serde(rename = "cap")]
    pub capacity: u32,
    /// Maximum excess travel time Δ, minutes.
    #[serde(rename = "delta")]
    pub max_excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassengerRequest {
    pub id: u32,
    #[serde(rename = "o")]
    pub pickup: Location,
    #[serde(rename = "d")]
    pub dropoff: Location,
    pub t_ed: f64,
    /// Maximum excess travel time Δ (waiting included), minutes.
    #[serde(rename = "delta")]
    pub max_excess: f64,
    /// Maximum waiting time Ω for pickup, minutes.
    #[serde(rename = "omega")]
    pub max_wait: f64,
    /// Party size; the pickup adds `q` seats, the dropoff releases them.
    #[serde(rename = "q", default = "one")]
    pub party: u32,
}

fn one() -> u32 {
    1
}

/// One batch of drivers and passenger requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Instance {
    #[serde(default)]
    pub batch_id: u64,
    pub drivers: Vec<Driver>,
    pub passengers: Vec<PassengerRequest>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("participant id {0} is used more than once in the batch")]
    DuplicateId(u32),
    #[error("driver {0} has capacity 0")]
    ZeroCapacity(u32),
    #[error("passenger {0} has party size 0")]
    ZeroParty(u32),
    #[error("participant {id}: {field} must be finite and non-negative, got {value}")]
    BadTime {
        id: u32,
        field: &'static str,
        value: f64,
    },
    #[error("invalid engine configuration: {0}")]
    Config(String),
}

impl Instance {
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen = HashSet::new();
        for d in &self.drivers {
            if !seen.insert(d.id) {
                return Err(ModelError::DuplicateId(d.id));
            }
            if d.capacity == 0 {
                return Err(ModelError::ZeroCapacity(d.id));
            }
            check_time(d.id, "delta", d.max_excess)?;
            if !d.t_ed.is_finite() {
                return Err(ModelError::BadTime { id: d.id, field: "t_ed", value: d.t_ed });
            }
        }
        for p in &self.passengers {
            if !seen.insert(p.id) {
                return Err(ModelError::DuplicateId(p.id));
            }
            if p.party == 0 {
                return Err(ModelError::ZeroParty(p.id));
            }
            check_time(p.id, "delta", p.max_excess)?;
            check_time(p.id, "omega", p.max_wait)?;
            if !p.t_ed.is_finite() {
                return Err(ModelError::BadTime { id: p.id, field: "t_ed", value: p.t_ed });
            }
        }
        Ok(())
    }

    pub fn driver_index(&self, id: u32) -> Option<usize> {
        self.drivers.iter().position(|d| d.id == id)
    }

    pub fn passenger_index(&self, id: u32) -> Option<usize> {
        self.passengers.iter().position(|p| p.id == id)
    }
}

fn check_time(id: u32, field: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::BadTime { id, field, value })
    }
}

/// Fill Δ and Ω from shortest-path times: Δ_k = excess·τ_k for every
/// participant and Ω_j = wait·Δ_j for every passenger. Fractions, not
/// percentages (0.2 means 20%).
pub fn default_constraints(
    instance: &Instance,
    driver_tau: &[f64],
    passenger_tau: &[f64],
    excess: f64,
    wait: f64,
) -> Instance {
    assert_eq!(driver_tau.len(), instance.drivers.len());
    assert_eq!(passenger_tau.len(), instance.passengers.len());
    let mut out = instance.clone();
    for (d, &tau) in out.drivers.iter_mut().zip(driver_tau) {
        d.max_excess = excess * tau;
    }
    for (p, &tau) in out.passengers.iter_mut().zip(passenger_tau) {
        p.max_excess = excess * tau;
        p.max_wait = wait * p.max_excess;
    }
    out
}

/// Tuning knobs of the matching engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Largest number of requests combined onto one driver.
    pub max_combo_size: usize,
    /// Pruning speed bound in km/h. `None` derives it from the travel model.
    pub v_max: Option<f64>,
    pub prune: bool,
    /// Tolerance for time comparisons, minutes.
    pub eps: f64,
    pub threads: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_combo_size: 4,
            v_max: None,
            prune: true,
            eps: 1e-9,
            threads: 1,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.max_combo_size == 0 {
            return Err(ModelError::Config("max combination size must be >= 1".into()));
        }
        if let Some(v) = self.v_max {
            if !(v > 0.0) {
                return Err(ModelError::Config(format!("v_max must be positive, got {v}")));
            }
        }
        if !(self.eps >= 0.0) {
            return Err(ModelError::Config(format!("eps must be >= 0, got {}", self.eps)));
        }
        Ok(())
    }
}
