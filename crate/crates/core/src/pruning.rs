//! Geometric pre-processing of driver/request pairs.
//!
//! A request survives for a driver when both of its stops lie inside the
//! driver's accessible ellipse and the driver's origin lies inside the
//! request's reachable-pickup circle. Both shapes over-approximate the
//! feasible region, so pruning never removes a servable request.

use crate::model::{EngineConfig, Instance, Point};
use crate::network::PdNetwork;

const REL_TOL: f64 = 1e-12;
const ABS_TOL: f64 = 1e-9;

/// Ellipse with the driver's origin and destination as foci.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccessibleRegion {
    pub origin: Point,
    pub destination: Point,
    /// Bound on ‖o − p‖ + ‖p − d‖, km.
    pub max_length: f64,
}

impl AccessibleRegion {
    pub fn contains(&self, p: &Point) -> bool {
        let chain = self.origin.distance(p) + p.distance(&self.destination);
        chain <= self.max_length * (1.0 + REL_TOL) + ABS_TOL
    }

    pub fn is_empty(&self) -> bool {
        !(self.max_length * (1.0 + REL_TOL) + ABS_TOL >= self.origin.distance(&self.destination))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReachablePickupRegion {
    pub center: Point,
    pub radius: f64,
}

impl ReachablePickupRegion {
    pub fn contains(&self, p: &Point) -> bool {
        self.radius >= 0.0 && self.center.distance(p) <= self.radius * (1.0 + REL_TOL) + ABS_TOL
    }
}

/// Accessible region of driver `i`: L_max = v_max·(τ + Δ).
pub fn accessible_region(
    instance: &Instance,
    pd: &PdNetwork,
    i: usize,
    v_max: f64,
) -> Option<AccessibleRegion> {
    let origin = pd.node(pd.driver_origin(i)).point?;
    let destination = pd.node(pd.driver_destination(i)).point?;
    let budget = pd.driver_direct(i).time + instance.drivers[i].max_excess;
    Some(AccessibleRegion { origin, destination, max_length: v_max * budget / 60.0 })
}

/// Reachable-pickup circle of request `j` as seen by a driver departing at
/// `departure`. The radius is v_max times the time left until the latest
/// pickup, which is v_max·Ω when both depart at the batch time.
pub fn reachable_pickup_region(
    instance: &Instance,
    pd: &PdNetwork,
    j: usize,
    departure: f64,
    v_max: f64,
) -> Option<ReachablePickupRegion> {
    let r = &instance.passengers[j];
    let center = pd.node(pd.pickup(j)).point?;
    let slack = r.t_ed + r.max_wait - departure;
    Some(ReachablePickupRegion { center, radius: v_max * slack / 60.0 })
}

/// Candidate set R_v of driver `i`, as sorted passenger indices.
pub fn candidate_requests(
    instance: &Instance,
    pd: &PdNetwork,
    i: usize,
    config: &EngineConfig,
    v_max: f64,
) -> Vec<usize> {
    let all = 0..instance.passengers.len();
    if !config.prune {
        return all.collect();
    }
    let driver = &instance.drivers[i];
    let region = if v_max.is_finite() { accessible_region(instance, pd, i, v_max) } else { None };
    let Some(region) = region else {
        return all.filter(|&j| time_screen(instance, pd, i, j, config.eps)).collect();
    };
    if region.is_empty() {
        return Vec::new();
    }
    let origin = region.origin;
    all.filter(|&j| {
        let pick = pd.node(pd.pickup(j)).point;
        let drop = pd.node(pd.dropoff(j)).point;
        let circle = reachable_pickup_region(instance, pd, j, driver.t_ed, v_max);
        match (pick, drop, circle) {
            (Some(p), Some(d), Some(c)) => {
                region.contains(&p) && region.contains(&d) && c.contains(&origin)
            }
            _ => time_screen(instance, pd, i, j, config.eps),
        }
    })
    .collect()
}

/// Exact pairwise time test used when no usable geometry exists: the
/// driver must reach the pickup before the latest pickup time, and the
/// chain o_v → o_j → d_j → d_v must fit in the driver's time budget.
fn time_screen(instance: &Instance, pd: &PdNetwork, i: usize, j: usize, eps: f64) -> bool {
    let driver = &instance.drivers[i];
    let r = &instance.passengers[j];
    let (o, d) = (pd.driver_origin(i), pd.driver_destination(i));
    let (p, q) = (pd.pickup(j), pd.dropoff(j));
    let to_pickup = pd.arc(o, p).time;
    let chain = to_pickup + pd.arc(p, q).time + pd.arc(q, d).time;
    driver.t_ed + to_pickup <= r.t_ed + r.max_wait + eps
        && chain <= pd.driver_direct(i).time + driver.max_excess + eps
}

/// Speed bound for pruning: the configured one, or the travel model's.
pub fn pruning_speed(config: &EngineConfig, model_speed: f64) -> f64 {
    config.v_max.unwrap_or(model_speed)
}

/// Candidate sets for every driver.
pub fn all_candidates(
    instance: &Instance,
    pd: &PdNetwork,
    config: &EngineConfig,
    v_max: f64,
) -> Vec<Vec<usize>> {
    (0..instance.drivers.len())
        .map(|i| candidate_requests(instance, pd, i, config, v_max))
        .collect()
}

/// Mean share (percent) of requests pruned away per driver.
pub fn prune_strength(candidates: &[Vec<usize>], n_requests: usize) -> f64 {
    if candidates.is_empty() || n_requests == 0 {
        return 0.0;
    }
    let total: f64 = candidates
        .iter()
        .map(|c| 1.0 - c.len() as f64 / n_requests as f64)
        .sum();
    100.0 * total / candidates.len() as f64
}
