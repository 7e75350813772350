//! Brute-force references for small instances.
//!
//! Everything here checks constraints straight from the route definition
//! (arrival times chained with no waiting, occupancy updates, windows,
//! excess and capacity bounds) without touching the dynamic-tree code.

use std::collections::HashMap;

use thiserror::Error;

use crate::dtree::Stop;
use crate::model::Instance;
use crate::network::PdNetwork;

pub const MAX_VRP_REQUESTS: usize = 5;
pub const MAX_MATCHING_DRIVERS: usize = 3;
pub const MAX_MATCHING_REQUESTS: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("instance too large for exhaustive search: {0}")]
    SizeLimit(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    /// Minimum route distance and the stop order achieving it, if any order
    /// is feasible.
    pub best: Option<(f64, Vec<Stop>)>,
    /// Precedence-valid orders enumerated.
    pub examined: usize,
    pub feasible: usize,
}

/// Enumerate every pickup/dropoff interleaving of `requests` for `driver`
/// and return the cheapest feasible one.
pub fn brute_force_vrp(
    instance: &Instance,
    pd: &PdNetwork,
    driver: usize,
    requests: &[usize],
    eps: f64,
) -> Result<OracleReport, OracleError> {
    if requests.len() > MAX_VRP_REQUESTS {
        return Err(OracleError::SizeLimit(format!(
            "{} requests (limit {MAX_VRP_REQUESTS})",
            requests.len()
        )));
    }
    let mut search = VrpSearch {
        instance,
        pd,
        driver,
        requests,
        eps,
        order: Vec::with_capacity(2 * requests.len()),
        picked: vec![false; requests.len()],
        dropped: vec![false; requests.len()],
        report: OracleReport { best: None, examined: 0, feasible: 0 },
    };
    search.enumerate();
    Ok(search.report)
}

struct VrpSearch<'a> {
    instance: &'a Instance,
    pd: &'a PdNetwork,
    driver: usize,
    requests: &'a [usize],
    eps: f64,
    order: Vec<Stop>,
    picked: Vec<bool>,
    dropped: Vec<bool>,
    report: OracleReport,
}

impl VrpSearch<'_> {
    fn enumerate(&mut self) {
        if self.order.len() == 2 * self.requests.len() {
            self.report.examined += 1;
            if let Some(dist) = self.evaluate() {
                self.report.feasible += 1;
                let better = match &self.report.best {
                    None => true,
                    Some((b, _)) => dist < *b,
                };
                if better {
                    self.report.best = Some((dist, self.full_route()));
                }
            }
            return;
        }
        for k in 0..self.requests.len() {
            let j = self.requests[k];
            if !self.picked[k] {
                self.picked[k] = true;
                self.order.push(Stop::Pickup(j));
                self.enumerate();
                self.order.pop();
                self.picked[k] = false;
            } else if !self.dropped[k] {
                self.dropped[k] = true;
                self.order.push(Stop::Dropoff(j));
                self.enumerate();
                self.order.pop();
                self.dropped[k] = false;
            }
        }
    }

    fn full_route(&self) -> Vec<Stop> {
        let mut r = Vec::with_capacity(self.order.len() + 2);
        r.push(Stop::Origin);
        r.extend_from_slice(&self.order);
        r.push(Stop::Destination);
        r
    }

    fn node_of(&self, s: Stop) -> usize {
        match s {
            Stop::Origin => self.pd.driver_origin(self.driver),
            Stop::Destination => self.pd.driver_destination(self.driver),
            Stop::Pickup(j) => self.pd.pickup(j),
            Stop::Dropoff(j) => self.pd.dropoff(j),
        }
    }

    /// Route distance if every constraint holds.
    fn evaluate(&self) -> Option<f64> {
        let route = self.full_route();
        check_route(self.instance, self.pd, self.driver, &route, self.eps, |s| self.node_of(s))
    }
}

/// Checks a complete route starting at the driver's origin and ending at
/// the destination; returns its distance when feasible.
fn check_route(
    instance: &Instance,
    pd: &PdNetwork,
    driver: usize,
    route: &[Stop],
    eps: f64,
    node_of: impl Fn(Stop) -> usize,
) -> Option<f64> {
    let drv = &instance.drivers[driver];
    let cap = drv.capacity as i64;
    let mut time = HashMap::with_capacity(route.len());
    let mut t = drv.t_ed;
    let mut load: i64 = 0;
    let mut dist = 0.0;
    let mut tt_sum = 0.0;
    time.insert(route[0], t);
    for w in route.windows(2) {
        let arc = pd.arc(node_of(w[0]), node_of(w[1]));
        t += arc.time;
        tt_sum += arc.time;
        dist += arc.dist;
        let q = match w[1] {
            Stop::Pickup(j) => instance.passengers[j].party as i64,
            Stop::Dropoff(j) => -(instance.passengers[j].party as i64),
            _ => 0,
        };
        load += q;
        if load < q.max(0) || load > cap.min(cap + q) {
            return None;
        }
        time.insert(w[1], t);
    }
    // Driver excess.
    if tt_sum - pd.driver_direct(driver).time > drv.max_excess + eps {
        return None;
    }
    for s in route {
        if let Stop::Pickup(j) = *s {
            let r = &instance.passengers[j];
            let tp = time[&Stop::Pickup(j)];
            let td = time[&Stop::Dropoff(j)];
            if td < tp {
                return None;
            }
            if tp < r.t_ed - eps {
                return None;
            }
            if tp - r.t_ed > r.max_wait + eps {
                return None;
            }
            if td - r.t_ed - pd.passenger_direct(j).time > r.max_excess + eps {
                return None;
            }
        }
    }
    Some(dist)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingOracle {
    /// Total vehicle-kilometres z.
    pub objective: f64,
    /// Requests served by each driver.
    pub assignment: Vec<Vec<usize>>,
}

/// Exhaustive global matching: every way of handing disjoint request
/// subsets (size ≤ `max_combo`) to drivers, each priced by
/// [`brute_force_vrp`].
pub fn brute_force_matching(
    instance: &Instance,
    pd: &PdNetwork,
    max_combo: usize,
    eps: f64,
) -> Result<MatchingOracle, OracleError> {
    let nv = instance.drivers.len();
    let nr = instance.passengers.len();
    if nv > MAX_MATCHING_DRIVERS || nr > MAX_MATCHING_REQUESTS {
        return Err(OracleError::SizeLimit(format!(
            "{nv} drivers / {nr} requests (limit {MAX_MATCHING_DRIVERS} / {MAX_MATCHING_REQUESTS})"
        )));
    }
    let limit = max_combo.min(MAX_VRP_REQUESTS);
    let mut priced: HashMap<(usize, Vec<usize>), Option<f64>> = HashMap::new();
    let mut price = |v: usize, set: &[usize]| -> Result<Option<f64>, OracleError> {
        let key = (v, set.to_vec());
        if let Some(p) = priced.get(&key) {
            return Ok(*p);
        }
        let p = brute_force_vrp(instance, pd, v, set, eps)?.best.map(|(d, _)| d);
        priced.insert(key, p);
        Ok(p)
    };

    let mut best: Option<MatchingOracle> = None;
    // label[j] = 0 (drive alone) or 1 + driver index.
    let mut label = vec![0usize; nr];
    'outer: loop {
        let mut sets = vec![Vec::new(); nv];
        for (j, &l) in label.iter().enumerate() {
            if l > 0 {
                sets[l - 1].push(j);
            }
        }
        if sets.iter().all(|s| s.len() <= limit) {
            let mut z = 0.0;
            let mut ok = true;
            for (v, set) in sets.iter().enumerate() {
                match price(v, set)? {
                    Some(d) => z += d,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                for (j, &l) in label.iter().enumerate() {
                    if l == 0 {
                        z += pd.passenger_direct(j).dist;
                    }
                }
                if best.as_ref().is_none_or(|b| z < b.objective) {
                    best = Some(MatchingOracle { objective: z, assignment: sets });
                }
            }
        }
        // Next labelling in base nv + 1.
        for l in label.iter_mut() {
            *l += 1;
            if *l <= nv {
                continue 'outer;
            }
            *l = 0;
        }
        break;
    }
    // The all-alone labelling is always feasible because direct trips are.
    Ok(best.expect("drive-alone assignment is feasible"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Driver, Location, PassengerRequest, Point};
    use crate::network::Travel;

    fn pt(x: f64, y: f64) -> Location {
        Location::Point(Point::new(x, y))
    }

    fn inst(n_req: usize, loose: bool) -> (Instance, PdNetwork) {
        let slack = if loose { 1e6 } else { 0.0 };
        let inst = Instance {
            batch_id: 0,
            drivers: vec![Driver {
                id: 0,
                origin: pt(0.0, 0.0),
                destination: pt(10.0, 0.0),
                t_ed: 0.0,
                capacity: 10,
                max_excess: slack,
            }],
            passengers: (0..n_req)
                .map(|k| PassengerRequest {
                    id: 10 + k as u32,
                    pickup: pt(k as f64, 1.0),
                    dropoff: pt(k as f64 + 3.0, -1.0),
                    t_ed: 0.0,
                    max_excess: slack,
                    max_wait: slack,
                    party: 1,
                })
                .collect(),
        };
        let pd = PdNetwork::build(&Travel::Euclidean { speed_kmh: 60.0 }, &inst).unwrap();
        (inst, pd)
    }

    #[test]
    fn counts_precedence_valid_orders() {
        for (m, expected) in [(0, 1), (1, 1), (2, 6), (3, 90), (4, 2520)] {
            let (i, pd) = inst(m, true);
            let reqs: Vec<usize> = (0..m).collect();
            let rep = brute_force_vrp(&i, &pd, 0, &reqs, 1e-9).unwrap();
            assert_eq!(rep.examined, expected, "m = {m}");
            assert_eq!(rep.feasible, expected);
        }
        let (i, pd) = inst(6, true);
        assert!(matches!(
            brute_force_vrp(&i, &pd, 0, &[0, 1, 2, 3, 4, 5], 1e-9),
            Err(OracleError::SizeLimit(_))
        ));
    }

    #[test]
    fn matching_trivial_cases() {
        let (i, pd) = inst(0, false);
        let m = brute_force_matching(&i, &pd, 4, 1e-9).unwrap();
        assert_eq!(m.objective, 10.0);

        // Zero slack: the off-axis request cannot be served.
        let (i, pd) = inst(1, false);
        let m = brute_force_matching(&i, &pd, 4, 1e-9).unwrap();
        let alone = pd.passenger_direct(0).dist;
        assert!((m.objective - (10.0 + alone)).abs() < 1e-12);
        assert!(m.assignment[0].is_empty());
    }
}
