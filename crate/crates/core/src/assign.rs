//! Combination-to-driver assignment: a set-packing integer program solved
//! exactly by branch and bound, plus result assembly and batch metrics.

use serde::{Deserialize, Serialize};

use crate::combos::Combination;
use crate::dtree::{RoutingContext, Stop};
use crate::network::{PdNetwork, Rejection};
use crate::pruning::prune_strength;

/// Columns are combinations. Φ and Ψ are stored column-wise as the request
/// set and the owning driver of each column.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentProblem {
    /// Γ, km.
    pub costs: Vec<f64>,
    pub request_sets: Vec<Vec<usize>>,
    pub drivers: Vec<usize>,
    pub n_requests: usize,
    pub n_drivers: usize,
    /// B: everyone driving alone, km.
    pub baseline: f64,
}

impl AssignmentProblem {
    pub fn n(&self) -> usize {
        self.costs.len()
    }

    /// φ(i, j): request i is in column j.
    pub fn phi(&self, i: usize, j: usize) -> bool {
        self.request_sets[j].binary_search(&i).is_ok()
    }

    /// ψ(i, j): column j belongs to driver i.
    pub fn psi(&self, i: usize, j: usize) -> bool {
        self.drivers[j] == i
    }

    /// B + Γ·X for a selection of column indices.
    pub fn objective(&self, selected: &[usize]) -> f64 {
        self.baseline + selected.iter().map(|&j| self.costs[j]).sum::<f64>()
    }

    /// True when no request and no driver is covered twice.
    pub fn is_feasible(&self, selected: &[usize]) -> bool {
        let mut req = vec![false; self.n_requests];
        let mut drv = vec![false; self.n_drivers];
        for &j in selected {
            if std::mem::replace(&mut drv[self.drivers[j]], true) {
                return false;
            }
            for &r in &self.request_sets[j] {
                if std::mem::replace(&mut req[r], true) {
                    return false;
                }
            }
        }
        true
    }
}

/// Sum of every participant's direct distance.
pub fn baseline(pd: &PdNetwork) -> f64 {
    let drivers: f64 = (0..pd.n_drivers()).map(|i| pd.driver_direct(i).dist).sum();
    let passengers: f64 = (0..pd.n_passengers()).map(|j| pd.passenger_direct(j).dist).sum();
    drivers + passengers
}

pub fn build_problem(pd: &PdNetwork, combos: &[Combination]) -> AssignmentProblem {
    AssignmentProblem {
        costs: combos.iter().map(|c| c.cost).collect(),
        request_sets: combos.iter().map(|c| c.requests.clone()).collect(),
        drivers: combos.iter().map(|c| c.driver).collect(),
        n_requests: pd.n_passengers(),
        n_drivers: pd.n_drivers(),
        baseline: baseline(pd),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Selected column indices, ascending.
    pub selected: Vec<usize>,
    /// Γ·X.
    pub cost: f64,
    /// Search nodes visited, summed over components.
    pub nodes: u64,
}

/// Exact minimum of Γ·X under the packing constraints.
pub fn solve_assignment(problem: &AssignmentProblem) -> Solution {
    let useful: Vec<usize> = (0..problem.n()).filter(|&j| problem.costs[j] < 0.0).collect();
    let mut selected = Vec::new();
    let mut nodes = 0;
    for comp in components(problem, &useful) {
        let (cols, n) = Component::new(problem, &comp).solve();
        selected.extend(cols);
        nodes += n;
    }
    selected.sort_unstable();
    let cost = selected.iter().map(|&j| problem.costs[j]).sum();
    Solution { selected, cost, nodes }
}

/// Connected components of the driver/request graph induced by `cols`.
fn components(problem: &AssignmentProblem, cols: &[usize]) -> Vec<Vec<usize>> {
    let nd = problem.n_drivers;
    let mut parent: Vec<usize> = (0..nd + problem.n_requests).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &j in cols {
        let a = find(&mut parent, problem.drivers[j]);
        for &r in &problem.request_sets[j] {
            let b = find(&mut parent, nd + r);
            if a != b {
                let (lo, hi) = (a.min(b), a.max(b));
                parent[hi] = lo;
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for &j in cols {
        let root = find(&mut parent, problem.drivers[j]);
        groups.entry(root).or_default().push(j);
    }
    groups.into_values().collect()
}

struct Column {
    global: usize,
    cost: f64,
    bits: Vec<u64>,
    /// Local request indices.
    reqs: Vec<usize>,
}

struct Component {
    /// Per local driver, cheapest column first.
    drivers: Vec<Vec<Column>>,
    n_reqs: usize,
    words: usize,
    /// Lagrange multipliers of the request rows.
    lambda: Vec<f64>,
    /// Per local driver, column positions by increasing reduced cost.
    by_reduced: Vec<Vec<(usize, f64)>>,
    best: f64,
    best_pick: Vec<usize>,
    pick: Vec<usize>,
    nodes: u64,
}

/// Slack kept when comparing bounds with the incumbent, km.
const BOUND_SLACK: f64 = 1e-9;

impl Component {
    fn new(problem: &AssignmentProblem, cols: &[usize]) -> Self {
        let mut req_ids: Vec<usize> = cols
            .iter()
            .flat_map(|&j| problem.request_sets[j].iter().copied())
            .collect();
        req_ids.sort_unstable();
        req_ids.dedup();
        let words = req_ids.len().div_ceil(64).max(1);
        let mut by_driver: std::collections::BTreeMap<usize, Vec<Column>> = Default::default();
        for &j in cols {
            let mut bits = vec![0u64; words];
            let reqs: Vec<usize> =
                problem.request_sets[j].iter().map(|r| req_ids.binary_search(r).unwrap()).collect();
            for &k in &reqs {
                bits[k / 64] |= 1 << (k % 64);
            }
            by_driver.entry(problem.drivers[j]).or_default().push(Column { global: j, cost: problem.costs[j], bits, reqs });
        }
        let mut drivers: Vec<_> = by_driver.into_values().collect();
        for cols in &mut drivers {
            cols.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.global.cmp(&b.global)));
        }
        // Drivers with the most negative column branch first.
        drivers.sort_by(|a, b| a[0].cost.total_cmp(&b[0].cost).then(a[0].global.cmp(&b[0].global)));
        Component {
            drivers,
            n_reqs: req_ids.len(),
            words,
            lambda: vec![0.0; req_ids.len()],
            by_reduced: Vec::new(),
            best: 0.0,
            best_pick: Vec::new(),
            pick: Vec::new(),
            nodes: 0,
        }
    }

    fn solve(mut self) -> (Vec<usize>, u64) {
        self.greedy();
        self.optimize_multipliers();
        let used = vec![0u64; self.words];
        self.branch(0, 0.0, &used);
        (self.best_pick, self.nodes)
    }

    /// Incumbent from taking columns cheapest first.
    fn greedy(&mut self) {
        let mut order: Vec<(usize, usize)> =
            (0..self.drivers.len()).flat_map(|d| (0..self.drivers[d].len()).map(move |k| (d, k))).collect();
        order.sort_by(|a, b| {
            let (x, y) = (&self.drivers[a.0][a.1], &self.drivers[b.0][b.1]);
            x.cost.total_cmp(&y.cost).then(x.global.cmp(&y.global))
        });
        let mut used = vec![0u64; self.words];
        let mut taken = vec![false; self.drivers.len()];
        let (mut cost, mut pick) = (0.0, Vec::new());
        for (d, k) in order {
            let col = &self.drivers[d][k];
            if !taken[d] && Self::compatible(&col.bits, &used) {
                taken[d] = true;
                used.iter_mut().zip(&col.bits).for_each(|(u, b)| *u |= b);
                cost += col.cost;
                pick.push(col.global);
            }
        }
        if cost < self.best {
            self.best = cost;
            self.best_pick = pick;
        }
    }

    fn reduced(&self, col: &Column) -> f64 {
        col.cost + col.reqs.iter().map(|&k| self.lambda[k]).sum::<f64>()
    }

    /// Subgradient ascent on the Lagrangian dual of the request rows.
    fn optimize_multipliers(&mut self) {
        let mut best_lambda = self.lambda.clone();
        let mut best_value = f64::NEG_INFINITY;
        let mut step = 2.0;
        let mut stale = 0;
        for _ in 0..300 {
            let mut value = -self.lambda.iter().sum::<f64>();
            let mut grad = vec![-1.0; self.n_reqs];
            for cols in &self.drivers {
                let arg = cols
                    .iter()
                    .map(|c| (self.reduced(c), c))
                    .min_by(|a, b| a.0.total_cmp(&b.0));
                if let Some((rc, c)) = arg.filter(|(rc, _)| *rc < 0.0) {
                    value += rc;
                    for &k in &c.reqs {
                        grad[k] += 1.0;
                    }
                }
            }
            if value > best_value + 1e-12 {
                best_value = value;
                best_lambda.clone_from(&self.lambda);
                stale = 0;
            } else {
                stale += 1;
                if stale >= 20 {
                    step /= 2.0;
                    stale = 0;
                }
            }
            // Rows with zero multiplier and slack cannot move.
            for (g, l) in grad.iter_mut().zip(&self.lambda) {
                if *l <= 0.0 && *g < 0.0 {
                    *g = 0.0;
                }
            }
            let norm: f64 = grad.iter().map(|g| g * g).sum();
            let gap = self.best - value;
            if norm == 0.0 || gap <= BOUND_SLACK || step < 1e-4 {
                break;
            }
            let t = step * gap / norm;
            for (l, g) in self.lambda.iter_mut().zip(&grad) {
                *l = (*l + t * g).max(0.0);
            }
        }
        self.lambda = best_lambda;
        self.by_reduced = self
            .drivers
            .iter()
            .map(|cols| {
                let mut v: Vec<(usize, f64)> = cols.iter().enumerate().map(|(k, c)| (k, self.reduced(c))).collect();
                v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                v
            })
            .collect();
    }

    fn compatible(bits: &[u64], used: &[u64]) -> bool {
        bits.iter().zip(used).all(|(a, b)| a & b == 0)
    }

    /// Lower bound on what the remaining drivers can add given `used`: the
    /// larger of the cheapest-compatible-column sum and the Lagrangian bound.
    fn bound(&self, depth: usize, used: &[u64]) -> f64 {
        let plain: f64 = self.drivers[depth..]
            .iter()
            .map(|cols| cols.iter().find(|c| Self::compatible(&c.bits, used)).map_or(0.0, |c| c.cost.min(0.0)))
            .sum();
        let mut lagrange: f64 = self.by_reduced[depth..]
            .iter()
            .zip(&self.drivers[depth..])
            .map(|(order, cols)| {
                order
                    .iter()
                    .find(|(k, _)| Self::compatible(&cols[*k].bits, used))
                    .map_or(0.0, |&(_, rc)| rc.min(0.0))
            })
            .sum();
        for (k, l) in self.lambda.iter().enumerate() {
            if used[k / 64] >> (k % 64) & 1 == 0 {
                lagrange -= l;
            }
        }
        plain.max(lagrange)
    }

    fn branch(&mut self, depth: usize, cost: f64, used: &[u64]) {
        self.nodes += 1;
        if depth == self.drivers.len() {
            if cost < self.best {
                self.best = cost;
                self.best_pick = self.pick.clone();
            }
            return;
        }
        if cost + self.bound(depth, used) - BOUND_SLACK >= self.best {
            return;
        }
        for k in 0..self.drivers[depth].len() {
            let col = &self.drivers[depth][k];
            if !Self::compatible(&col.bits, used) {
                continue;
            }
            let (j, c) = (col.global, col.cost);
            let next: Vec<u64> = col.bits.iter().zip(used).map(|(a, b)| a | b).collect();
            self.pick.push(j);
            self.branch(depth + 1, cost + c, &next);
            self.pick.pop();
        }
        self.branch(depth + 1, cost, used);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopKind {
    Origin,
    Destination,
    Pickup,
    Dropoff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteStop {
    pub kind: StopKind,
    /// Driver id for origin/destination, passenger id otherwise.
    pub participant: u32,
    pub time: f64,
    pub load: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassengerOutcome {
    pub id: u32,
    pub wait: f64,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignedRoute {
    pub driver: u32,
    pub passengers: Vec<u32>,
    pub route_km: f64,
    pub gamma_km: f64,
    pub driver_excess: f64,
    pub stops: Vec<RouteStop>,
    pub passenger_times: Vec<PassengerOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Metrics {
    /// Percent of participants matched.
    pub match_rate: f64,
    pub prune_strength: f64,
    pub matched_drivers: usize,
    pub matched_passengers: usize,
    pub total_delta_v: f64,
    pub mean_delta_v: f64,
    pub total_delta_r: f64,
    pub mean_delta_r: f64,
    pub total_omega_r: f64,
    pub mean_omega_r: f64,
    pub vkt_saved_km: f64,
    pub trips_saved: usize,
    pub n_candidates: usize,
    pub n_combos: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub batch_id: u64,
    /// z, km.
    pub objective_km: f64,
    pub baseline_km: f64,
    pub routes: Vec<AssignedRoute>,
    pub unmatched_drivers: Vec<u32>,
    pub unmatched_passengers: Vec<u32>,
    pub rejected: Vec<Rejection>,
    pub metrics: Metrics,
}

/// (N_MV + N_MR) / (|V| + |R|) in percent.
pub fn match_rate(matched_drivers: usize, matched_passengers: usize, n_drivers: usize, n_passengers: usize) -> f64 {
    let total = n_drivers + n_passengers;
    if total == 0 {
        return 0.0;
    }
    100.0 * (matched_drivers + matched_passengers) as f64 / total as f64
}

fn mean(total: f64, n: usize) -> f64 {
    if n == 0 { 0.0 } else { total / n as f64 }
}

/// Turn the selected columns into the output record.
pub fn assemble_result(
    ctx: &RoutingContext,
    problem: &AssignmentProblem,
    combos: &[Combination],
    solution: &Solution,
    candidates: &[Vec<usize>],
    rejected: Vec<Rejection>,
) -> MatchResult {
    let inst = ctx.instance;
    let mut routes = Vec::new();
    let mut driver_used = vec![false; inst.drivers.len()];
    let mut passenger_used = vec![false; inst.passengers.len()];
    let mut m = Metrics::default();
    for &col in &solution.selected {
        let c = &combos[col];
        let s = &c.schedule;
        driver_used[c.driver] = true;
        let driver_id = inst.drivers[c.driver].id;
        let stops = s
            .stops
            .iter()
            .map(|st| {
                let (kind, participant) = match st.stop {
                    Stop::Origin => (StopKind::Origin, driver_id),
                    Stop::Destination => (StopKind::Destination, driver_id),
                    Stop::Pickup(j) => (StopKind::Pickup, inst.passengers[j].id),
                    Stop::Dropoff(j) => (StopKind::Dropoff, inst.passengers[j].id),
                };
                RouteStop { kind, participant, time: st.time, load: st.load }
            })
            .collect();
        let mut passenger_times = Vec::new();
        for p in &s.passengers {
            passenger_used[p.request] = true;
            let wait = p.wait.unwrap_or(0.0);
            m.total_delta_r += p.excess;
            m.total_omega_r += wait;
            passenger_times.push(PassengerOutcome { id: inst.passengers[p.request].id, wait, excess: p.excess });
        }
        m.total_delta_v += s.driver_excess;
        m.trips_saved += c.requests.len();
        routes.push(AssignedRoute {
            driver: driver_id,
            passengers: c.requests.iter().map(|&j| inst.passengers[j].id).collect(),
            route_km: s.distance,
            gamma_km: c.cost,
            driver_excess: s.driver_excess,
            stops,
            passenger_times,
        });
    }
    routes.sort_by_key(|r| r.driver);
    m.matched_drivers = routes.len();
    m.matched_passengers = m.trips_saved;
    m.match_rate = match_rate(m.matched_drivers, m.matched_passengers, inst.drivers.len(), inst.passengers.len());
    m.prune_strength = prune_strength(candidates, inst.passengers.len());
    m.mean_delta_v = mean(m.total_delta_v, m.matched_drivers);
    m.mean_delta_r = mean(m.total_delta_r, m.matched_passengers);
    m.mean_omega_r = mean(m.total_omega_r, m.matched_passengers);
    m.vkt_saved_km = -solution.cost;
    m.n_candidates = candidates.iter().map(Vec::len).sum();
    m.n_combos = combos.len();

    let mut unmatched_drivers: Vec<u32> = inst
        .drivers
        .iter()
        .zip(&driver_used)
        .filter(|(_, &u)| !u)
        .map(|(d, _)| d.id)
        .collect();
    unmatched_drivers.sort_unstable();
    let mut unmatched_passengers: Vec<u32> = inst
        .passengers
        .iter()
        .zip(&passenger_used)
        .filter(|(_, &u)| !u)
        .map(|(p, _)| p.id)
        .collect();
    unmatched_passengers.sort_unstable();

    MatchResult {
        batch_id: inst.batch_id,
        objective_km: problem.baseline + solution.cost,
        baseline_km: problem.baseline,
        routes,
        unmatched_drivers,
        unmatched_passengers,
        rejected,
        metrics: m,
    }
}

/// z evaluated term by term: every driver's route (direct when unmatched)
/// plus the direct distance of every unmatched passenger.
pub fn direct_objective(pd: &PdNetwork, combos: &[Combination], selected: &[usize]) -> f64 {
    let mut route: Vec<Option<f64>> = vec![None; pd.n_drivers()];
    let mut served = vec![false; pd.n_passengers()];
    for &j in selected {
        let c = &combos[j];
        route[c.driver] = Some(c.schedule.distance);
        for &r in &c.requests {
            served[r] = true;
        }
    }
    let drivers: f64 = route
        .iter()
        .enumerate()
        .map(|(i, r)| r.unwrap_or_else(|| pd.driver_direct(i).dist))
        .sum();
    let passengers: f64 = served
        .iter()
        .enumerate()
        .filter(|(_, &s)| !s)
        .map(|(j, _)| pd.passenger_direct(j).dist)
        .sum();
    drivers + passengers
}
