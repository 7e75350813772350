//! Linearized mixed-integer model of the whole batch, written in LP text
//! format, and a checker that injects an engine result into the same rows.
//!
//! Per driver v the node set is {o_v, d_v} plus every passenger node, and
//! the arc set is every ordered pair except arcs into o_v or out of d_v.
//! Node names are PD ids.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assign::{MatchResult, StopKind};
use crate::dtree::{driver_window, dropoff_deadline, time_windows, RoutingContext};
use crate::model::Instance;
use crate::network::PdNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Big-M constants of one arc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcConstants {
    pub tt: f64,
    pub dist: f64,
    pub m1: f64,
    pub m2: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipModel {
    pub variables: Vec<Variable>,
    /// Objective coefficients by variable index; zero entries omitted.
    pub objective: Vec<(usize, f64)>,
    pub objective_constant: f64,
    pub rows: Vec<Row>,
    x: HashMap<(usize, usize, usize), usize>,
    z: HashMap<(usize, usize), usize>,
    t: HashMap<(usize, usize), usize>,
    q: HashMap<(usize, usize), usize>,
    /// Per driver, per arc in `x`.
    pub constants: HashMap<(usize, usize, usize), ArcConstants>,
}

/// Arrival window of a PD node for the exporter: earliest time, latest time
/// used for the big-M constants, and the tighter upper bound on t.
#[derive(Debug, Clone, Copy, PartialEq)]
struct NodeWindow {
    earliest: f64,
    latest: f64,
    upper: f64,
}

fn node_window(ctx: &RoutingContext, driver: usize, node: usize) -> NodeWindow {
    let pd = ctx.pd;
    if node == pd.driver_origin(driver) {
        let t = ctx.instance.drivers[driver].t_ed;
        return NodeWindow { earliest: t, latest: t, upper: t };
    }
    if node == pd.driver_destination(driver) {
        let w = driver_window(ctx, driver);
        return NodeWindow { earliest: w.earliest, latest: w.latest, upper: w.latest };
    }
    let j = passenger_of(pd, node);
    let w = time_windows(ctx, j);
    if node == pd.pickup(j) {
        NodeWindow { earliest: w.pickup.earliest, latest: w.pickup.latest, upper: w.pickup.latest }
    } else {
        NodeWindow {
            earliest: w.dropoff.earliest,
            latest: w.dropoff.latest,
            upper: dropoff_deadline(ctx, j).min(w.dropoff.latest),
        }
    }
}

fn passenger_of(pd: &PdNetwork, node: usize) -> usize {
    (node - 2 * pd.n_drivers()) / 2
}

fn load_delta(instance: &Instance, pd: &PdNetwork, node: usize) -> f64 {
    if node < 2 * pd.n_drivers() {
        return 0.0;
    }
    let j = passenger_of(pd, node);
    let q = instance.passengers[j].party as f64;
    if node == pd.pickup(j) { q } else { -q }
}

/// Arcs no route can use: origin to a dropoff, pickup to the driver's
/// destination, and a dropoff to its own pickup.
fn breaks_precedence(pd: &PdNetwork, driver: usize, a: usize, b: usize) -> bool {
    let first = 2 * pd.n_drivers();
    let is_pickup = |n: usize| n >= first && (n - first).is_multiple_of(2);
    let is_dropoff = |n: usize| n >= first && (n - first) % 2 == 1;
    (a == pd.driver_origin(driver) && is_dropoff(b))
        || (is_pickup(a) && b == pd.driver_destination(driver))
        || (is_dropoff(a) && b + 1 == a)
}

/// Necessary condition for `path` to appear in a route of `driver`: with no
/// waiting every arrival is at least the departure time plus the travel
/// time of the stops so far, so a missed deadline or seat overflow along
/// `path` (entered directly from the origin, left directly to the
/// destination) rules out every route containing it.
fn path_ok(ctx: &RoutingContext, driver: usize, path: &[usize]) -> bool {
    let (inst, pd) = (ctx.instance, ctx.pd);
    let cap = inst.drivers[driver].capacity as f64;
    let mut at = pd.driver_origin(driver);
    let mut t = inst.drivers[driver].t_ed;
    let mut load = 0.0;
    for &n in path {
        t += pd.arc(at, n).time;
        load += load_delta(inst, pd, n);
        if !(t <= node_window(ctx, driver, n).upper + ctx.eps) || load > cap {
            return false;
        }
        at = n;
    }
    t + pd.arc(at, pd.driver_destination(driver)).time <= driver_window(ctx, driver).latest + ctx.eps
}

/// Arc elimination between stops of two different requests: the arc is kept
/// when some two-request sequence using it passes `path_ok`.
fn pair_arc_ok(ctx: &RoutingContext, driver: usize, a: usize, b: usize) -> bool {
    let pd = ctx.pd;
    let first = 2 * pd.n_drivers();
    if a < first || b < first {
        return true;
    }
    let (i, j) = (passenger_of(pd, a), passenger_of(pd, b));
    if i == j {
        return true;
    }
    let (pi, di, pj, dj) = (pd.pickup(i), pd.dropoff(i), pd.pickup(j), pd.dropoff(j));
    let ok = |p: [usize; 4]| path_ok(ctx, driver, &p);
    match (a == pi, b == pj) {
        (true, true) => ok([pi, pj, di, dj]) || ok([pi, pj, dj, di]),
        (true, false) => ok([pj, pi, dj, di]),
        (false, true) => ok([pi, di, pj, dj]),
        (false, false) => ok([pi, pj, di, dj]) || ok([pj, pi, di, dj]),
    }
}

/// Occupancy bounds at a node: max(0, q) and min(c, c + q).
fn load_bounds(cap: f64, q: f64) -> (f64, f64) {
    (q.max(0.0), cap.min(cap + q))
}

impl MipModel {
    /// Build the model. With `candidates`, driver v only gets the nodes of
    /// its candidate requests and arcs that cannot meet the time windows are
    /// left out; without, the full formulation is produced.
    pub fn build(ctx: &RoutingContext, candidates: Option<&[Vec<usize>]>) -> MipModel {
        let inst = ctx.instance;
        let pd = ctx.pd;
        let nv = inst.drivers.len();
        let nr = inst.passengers.len();
        let mut m = MipModel {
            variables: Vec::new(),
            objective: Vec::new(),
            objective_constant: (0..nr).map(|j| pd.passenger_direct(j).dist).sum(),
            rows: Vec::new(),
            x: HashMap::new(),
            z: HashMap::new(),
            t: HashMap::new(),
            q: HashMap::new(),
            constants: HashMap::new(),
        };
        let mut visits: Vec<Vec<(usize, f64)>> = vec![Vec::new(); 2 * nr];

        for v in 0..nv {
            let cap = inst.drivers[v].capacity as f64;
            let (o, d) = (pd.driver_origin(v), pd.driver_destination(v));
            let requests: Vec<usize> = match candidates {
                Some(c) => c[v]
                    .iter()
                    .copied()
                    .filter(|&j| path_ok(ctx, v, &[pd.pickup(j), pd.dropoff(j)]))
                    .collect(),
                None => (0..nr).collect(),
            };
            let mut nodes = vec![o];
            for &j in &requests {
                nodes.push(pd.pickup(j));
                nodes.push(pd.dropoff(j));
            }
            nodes.push(d);
            let win: HashMap<usize, NodeWindow> =
                nodes.iter().map(|&n| (n, node_window(ctx, v, n))).collect();

            for &n in &nodes {
                let w = win[&n];
                let t = m.add_var(format!("t_{v}_{n}"), VarKind::Continuous, w.earliest, w.upper);
                m.t.insert((v, n), t);
                let qd = load_delta(inst, pd, n);
                let (mut lo, mut hi) = if n == o { (0.0, 0.0) } else { load_bounds(cap, qd) };
                if lo > hi {
                    // Party larger than the vehicle: the request is fixed unserved below.
                    (lo, hi) = (0.0, cap);
                }
                let q = m.add_var(format!("q_{v}_{n}"), VarKind::Continuous, lo, hi);
                m.q.insert((v, n), q);
            }
            for &j in &requests {
                let fits = inst.passengers[j].party <= inst.drivers[v].capacity;
                let zi = m.add_var(format!("z_{v}_{j}"), VarKind::Binary, 0.0, if fits { 1.0 } else { 0.0 });
                m.z.insert((v, j), zi);
                m.objective.push((zi, -pd.passenger_direct(j).dist));
            }

            let mut inflow: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
            let mut outflow: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
            for &a in &nodes {
                if a == d {
                    continue;
                }
                for &b in &nodes {
                    if b == a || b == o {
                        continue;
                    }
                    let arc = pd.arc(a, b);
                    let (wa, wb) = (win[&a], win[&b]);
                    if candidates.is_some()
                        && (wa.earliest + arc.time > wb.upper + ctx.eps
                            || wa.upper + arc.time < wb.earliest - ctx.eps
                            || breaks_precedence(pd, v, a, b)
                            || !pair_arc_ok(ctx, v, a, b))
                    {
                        continue;
                    }
                    let qa = load_delta(inst, pd, a);
                    let c = ArcConstants {
                        tt: arc.time,
                        dist: arc.dist,
                        m1: arc.time + wa.latest - wb.earliest,
                        m2: arc.time + wb.latest - wa.earliest,
                        w: cap.min(cap + qa),
                    };
                    let xi = m.add_var(format!("x_{v}_{a}_{b}"), VarKind::Binary, 0.0, 1.0);
                    m.x.insert((v, a, b), xi);
                    m.constants.insert((v, a, b), c);
                    if c.dist != 0.0 {
                        m.objective.push((xi, c.dist));
                    }
                    outflow.entry(a).or_default().push((xi, 1.0));
                    inflow.entry(b).or_default().push((xi, 1.0));
                    if b >= 2 * nv {
                        visits[b - 2 * nv].push((xi, 1.0));
                    }
                    let (ta, tb) = (m.t[&(v, a)], m.t[&(v, b)]);
                    m.rows.push(Row {
                        name: format!("time_lo_{v}_{a}_{b}"),
                        terms: vec![(tb, 1.0), (ta, -1.0), (xi, -c.m1)],
                        sense: Sense::Ge,
                        rhs: c.tt - c.m1,
                    });
                    m.rows.push(Row {
                        name: format!("time_hi_{v}_{a}_{b}"),
                        terms: vec![(tb, 1.0), (ta, -1.0), (xi, c.m2)],
                        sense: Sense::Le,
                        rhs: c.tt + c.m2,
                    });
                    let (qa_i, qb_i) = (m.q[&(v, a)], m.q[&(v, b)]);
                    m.rows.push(Row {
                        name: format!("load_{v}_{a}_{b}"),
                        terms: vec![(qb_i, 1.0), (qa_i, -1.0), (xi, -c.w)],
                        sense: Sense::Ge,
                        rhs: load_delta(inst, pd, b) - c.w,
                    });
                }
            }

            m.rows.push(Row {
                name: format!("leave_{v}"),
                terms: outflow.remove(&o).unwrap_or_default(),
                sense: Sense::Eq,
                rhs: 1.0,
            });
            m.rows.push(Row {
                name: format!("arrive_{v}"),
                terms: inflow.remove(&d).unwrap_or_default(),
                sense: Sense::Eq,
                rhs: 1.0,
            });
            for &j in &requests {
                let zi = m.z[&(v, j)];
                for n in [pd.pickup(j), pd.dropoff(j)] {
                    let mut terms = inflow.remove(&n).unwrap_or_default();
                    terms.push((zi, -1.0));
                    m.rows.push(Row { name: format!("flow_in_{v}_{n}"), terms, sense: Sense::Eq, rhs: 0.0 });
                    let mut terms = outflow.remove(&n).unwrap_or_default();
                    terms.push((zi, -1.0));
                    m.rows.push(Row { name: format!("flow_out_{v}_{n}"), terms, sense: Sense::Eq, rhs: 0.0 });
                }
                let (tp, td) = (m.t[&(v, pd.pickup(j))], m.t[&(v, pd.dropoff(j))]);
                m.rows.push(Row {
                    name: format!("precedence_{v}_{}", pd.pickup(j)),
                    terms: vec![(td, 1.0), (tp, -1.0)],
                    sense: Sense::Ge,
                    rhs: 0.0,
                });
            }
            let (to, td) = (m.t[&(v, o)], m.t[&(v, d)]);
            m.rows.push(Row {
                name: format!("precedence_{v}_{o}"),
                terms: vec![(td, 1.0), (to, -1.0)],
                sense: Sense::Ge,
                rhs: 0.0,
            });
        }
        for (k, terms) in visits.into_iter().enumerate() {
            if !terms.is_empty() {
                m.rows.push(Row { name: format!("visit_{}", 2 * nv + k), terms, sense: Sense::Le, rhs: 1.0 });
            }
        }
        m
    }

    fn add_var(&mut self, name: String, kind: VarKind, lower: f64, upper: f64) -> usize {
        self.variables.push(Variable { name, kind, lower, upper });
        self.variables.len() - 1
    }

    pub fn x_var(&self, driver: usize, a: usize, b: usize) -> Option<usize> {
        self.x.get(&(driver, a, b)).copied()
    }

    pub fn z_var(&self, driver: usize, j: usize) -> Option<usize> {
        self.z.get(&(driver, j)).copied()
    }

    pub fn t_var(&self, driver: usize, node: usize) -> Option<usize> {
        self.t.get(&(driver, node)).copied()
    }

    pub fn q_var(&self, driver: usize, node: usize) -> Option<usize> {
        self.q.get(&(driver, node)).copied()
    }

    pub fn count_x(&self) -> usize {
        self.x.len()
    }

    pub fn count_z(&self) -> usize {
        self.z.len()
    }

    pub fn count_t(&self) -> usize {
        self.t.len()
    }

    pub fn count_q(&self) -> usize {
        self.q.len()
    }

    /// Objective value of an assignment of every variable.
    pub fn evaluate_objective(&self, values: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().map(|&(i, c)| c * values[i]).sum::<f64>()
    }

    /// LP text.
    pub fn to_lp(&self) -> String {
        let mut s = String::new();
        s.push_str("\\ ride-sharing batch model\nMinimize\n obj:");
        let mut terms = self.objective.clone();
        terms.sort_by_key(|t| t.0);
        self.write_terms(&mut s, &terms);
        if self.objective_constant != 0.0 {
            let _ = write!(s, " + {}", fmt_num(self.objective_constant));
        }
        s.push_str("\nSubject To\n");
        for row in &self.rows {
            let _ = write!(s, " {}:", row.name);
            if row.terms.is_empty() {
                // An empty row still has to parse; anchor it on the first variable.
                let _ = write!(s, " 0 {}", self.variables[0].name);
            }
            self.write_terms(&mut s, &row.terms);
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(s, " {op} {}", fmt_num(row.rhs));
        }
        s.push_str("Bounds\n");
        for v in self.variables.iter().filter(|v| v.kind == VarKind::Continuous) {
            if v.lower == v.upper {
                let _ = writeln!(s, " {} = {}", v.name, fmt_num(v.lower));
            } else {
                let _ = writeln!(s, " {} <= {} <= {}", fmt_num(v.lower), v.name, fmt_num(v.upper));
            }
        }
        for v in self.variables.iter().filter(|v| v.kind == VarKind::Binary && v.upper == 0.0) {
            let _ = writeln!(s, " {} = 0", v.name);
        }
        s.push_str("Binaries\n");
        for v in self.variables.iter().filter(|v| v.kind == VarKind::Binary) {
            let _ = writeln!(s, " {}", v.name);
        }
        s.push_str("End\n");
        s
    }

    fn write_terms(&self, s: &mut String, terms: &[(usize, f64)]) {
        for (k, &(i, c)) in terms.iter().enumerate() {
            if k > 0 && k % 8 == 0 {
                s.push_str("\n   ");
            }
            let sign = if c < 0.0 { '-' } else { '+' };
            let _ = write!(s, " {sign} {} {}", fmt_num(c.abs()), self.variables[i].name);
        }
    }
}

/// Shortest round-trip decimal.
fn fmt_num(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x}")
}

pub fn export_mip(ctx: &RoutingContext, candidates: Option<&[Vec<usize>]>) -> String {
    MipModel::build(ctx, candidates).to_lp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub row: String,
    /// Amount by which the row is violated.
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub rows_checked: usize,
    pub violations: Vec<Violation>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub values: Vec<f64>,
    /// Per driver, visited PD nodes in route order.
    pub routes: Vec<Vec<usize>>,
    /// Arcs used by the result that the model does not contain.
    pub missing_arcs: Vec<(usize, usize, usize)>,
}

/// Translate a result into variable values. Nodes a driver does not visit
/// get their earliest time and lowest admissible load.
pub fn inject(ctx: &RoutingContext, model: &MipModel, result: &MatchResult) -> Result<Injection, String> {
    let inst = ctx.instance;
    let pd = ctx.pd;
    let mut values: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
    let mut routes: Vec<Vec<usize>> = (0..inst.drivers.len())
        .map(|v| vec![pd.driver_origin(v), pd.driver_destination(v)])
        .collect();
    let mut times: HashMap<(usize, usize), f64> = HashMap::new();
    let mut loads: HashMap<(usize, usize), f64> = HashMap::new();
    for v in 0..inst.drivers.len() {
        let t0 = inst.drivers[v].t_ed;
        times.insert((v, pd.driver_origin(v)), t0);
        times.insert((v, pd.driver_destination(v)), t0 + pd.driver_direct(v).time);
    }
    for route in &result.routes {
        let v = inst.driver_index(route.driver).ok_or(format!("unknown driver {}", route.driver))?;
        let mut nodes = Vec::with_capacity(route.stops.len());
        times.retain(|k, _| k.0 != v);
        for st in &route.stops {
            let node = match st.kind {
                StopKind::Origin => pd.driver_origin(v),
                StopKind::Destination => pd.driver_destination(v),
                StopKind::Pickup | StopKind::Dropoff => {
                    let j = inst
                        .passenger_index(st.participant)
                        .ok_or(format!("unknown passenger {}", st.participant))?;
                    if st.kind == StopKind::Pickup { pd.pickup(j) } else { pd.dropoff(j) }
                }
            };
            nodes.push(node);
            times.insert((v, node), st.time);
            loads.insert((v, node), st.load as f64);
        }
        for &pid in &route.passengers {
            let j = inst.passenger_index(pid).ok_or(format!("unknown passenger {pid}"))?;
            match model.z_var(v, j) {
                Some(z) => values[z] = 1.0,
                None => return Err(format!("request {pid} is not in the model of driver {}", route.driver)),
            }
        }
        routes[v] = nodes;
    }
    let mut missing_arcs = Vec::new();
    for (v, nodes) in routes.iter().enumerate() {
        for w in nodes.windows(2) {
            match model.x_var(v, w[0], w[1]) {
                Some(x) => values[x] = 1.0,
                None => missing_arcs.push((v, w[0], w[1])),
            }
        }
    }
    for (&(v, n), &t) in &times {
        if let Some(i) = model.t_var(v, n) {
            values[i] = t;
        }
    }
    for (&(v, n), &q) in &loads {
        if let Some(i) = model.q_var(v, n) {
            values[i] = q;
        }
    }
    Ok(Injection { values, routes, missing_arcs })
}

/// Check a result against the nonlinear definitions (arrival time and
/// occupancy chained along each route), every linear row of the full model,
/// variable bounds on visited nodes, and the objective.
pub fn verify_solution(ctx: &RoutingContext, result: &MatchResult, eps: f64) -> VerifyReport {
    let model = MipModel::build(ctx, None);
    let mut report = VerifyReport { rows_checked: 0, violations: Vec::new() };
    let inj = match inject(ctx, &model, result) {
        Ok(i) => i,
        Err(e) => {
            report.violations.push(Violation { row: format!("structure: {e}"), amount: f64::INFINITY });
            return report;
        }
    };
    for &(v, a, b) in &inj.missing_arcs {
        report.violations.push(Violation { row: format!("arc_{v}_{a}_{b}"), amount: f64::INFINITY });
    }
    let vals = &inj.values;
    let mut check = |name: String, amount: f64| {
        report.rows_checked += 1;
        if amount > eps {
            report.violations.push(Violation { row: name, amount });
        }
    };

    for (v, nodes) in inj.routes.iter().enumerate() {
        for w in nodes.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (Some(ta), Some(tb), Some(qa), Some(qb)) =
                (model.t_var(v, a), model.t_var(v, b), model.q_var(v, a), model.q_var(v, b))
            else {
                continue;
            };
            let tt = ctx.pd.arc(a, b).time;
            check(format!("arrival_{v}_{b}"), (vals[tb] - vals[ta] - tt).abs());
            let qd = load_delta(ctx.instance, ctx.pd, b);
            check(format!("occupancy_{v}_{b}"), (vals[qb] - vals[qa] - qd).abs());
        }
        for &n in nodes {
            for (var, what) in [(model.t_var(v, n), "t"), (model.q_var(v, n), "q")] {
                if let Some(i) = var {
                    let var = &model.variables[i];
                    let over = (var.lower - vals[i]).max(vals[i] - var.upper);
                    check(format!("bound_{what}_{v}_{n}"), over.max(0.0));
                }
            }
        }
    }
    for row in &model.rows {
        let lhs: f64 = row.terms.iter().map(|&(i, c)| c * vals[i]).sum();
        let amount = match row.sense {
            Sense::Le => lhs - row.rhs,
            Sense::Ge => row.rhs - lhs,
            Sense::Eq => (lhs - row.rhs).abs(),
        };
        check(row.name.clone(), amount);
    }
    let z = model.evaluate_objective(vals);
    // Sums are taken in a different order than the engine's, so allow a
    // relative slack.
    let slack = 1e-9 * result.objective_km.abs().max(1.0);
    check("objective".into(), ((z - result.objective_km).abs() - slack).max(0.0));
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_batch;
    use crate::model::{Driver, EngineConfig, Location, PassengerRequest, Point};
    use crate::network::Travel;

    fn pt(x: f64, y: f64) -> Location {
        Location::Point(Point::new(x, y))
    }

    fn tiny(n_passengers: usize) -> Instance {
        Instance {
            batch_id: 0,
            drivers: vec![Driver {
                id: 1,
                origin: pt(0.0, 0.0),
                destination: pt(10.0, 0.0),
                t_ed: 0.0,
                capacity: 2,
                max_excess: 4.0,
            }],
            passengers: (0..n_passengers)
                .map(|k| PassengerRequest {
                    id: 10 + k as u32,
                    pickup: pt(1.0 + k as f64, 0.5),
                    dropoff: pt(8.0, 0.0),
                    t_ed: 0.0,
                    max_excess: 6.0,
                    max_wait: 5.0,
                    party: 1,
                })
                .collect(),
        }
    }

    #[test]
    fn variable_counts() {
        for nr in 0..4 {
            let inst = tiny(nr);
            let pd = PdNetwork::build(&Travel::Euclidean { speed_kmh: 60.0 }, &inst).unwrap();
            let ctx = RoutingContext::new(&inst, &pd, 1e-9);
            let m = MipModel::build(&ctx, None);
            let n = 2 * nr + 2;
            assert_eq!(m.count_x(), (n - 1) * (n - 2) + 1);
            assert_eq!(m.count_z(), nr);
            assert_eq!(m.count_t(), n);
            assert_eq!(m.count_q(), n);
        }
    }

    #[test]
    fn big_m_values_are_tight() {
        let inst = tiny(2);
        let pd = PdNetwork::build(&Travel::Euclidean { speed_kmh: 60.0 }, &inst).unwrap();
        let ctx = RoutingContext::new(&inst, &pd, 1e-9);
        let m = MipModel::build(&ctx, None);
        let (a, b) = (pd.pickup(0), pd.dropoff(1));
        let c = m.constants[&(0, a, b)];
        let wa = time_windows(&ctx, 0).pickup;
        let wb = time_windows(&ctx, 1).dropoff;
        assert_eq!(c.m1, c.tt + wa.latest - wb.earliest);
        assert_eq!(c.m2, c.tt + wb.latest - wa.earliest);
        assert_eq!(c.w, 2.0f64.min(2.0 + 1.0));
        let c = m.constants[&(0, pd.dropoff(0), b)];
        assert_eq!(c.w, 1.0);
    }

    #[test]
    fn engine_result_passes_and_perturbation_fails() {
        let inst = tiny(2);
        let travel = Travel::Euclidean { speed_kmh: 60.0 };
        let run = run_batch(&travel, &inst, &EngineConfig::default()).unwrap();
        assert!(!run.result.routes.is_empty());
        let ctx = RoutingContext::new(&run.instance, &run.pd, 1e-9);
        let report = verify_solution(&ctx, &run.result, 1e-9);
        assert!(report.passed(), "{:?}", report.violations);

        let mut bad = run.result.clone();
        bad.routes[0].stops[1].time += 1.0;
        let report = verify_solution(&ctx, &bad, 1e-9);
        let a = run.pd.driver_origin(0);
        let second = &bad.routes[0].stops[1];
        let b = match second.kind {
            StopKind::Pickup => run.pd.pickup(run.instance.passenger_index(second.participant).unwrap()),
            _ => unreachable!(),
        };
        let name = format!("time_hi_0_{a}_{b}");
        assert!(report.violations.iter().any(|v| v.row == name), "{:?}", report.violations);
    }

    #[test]
    fn direct_only_result_passes() {
        let mut inst = tiny(1);
        inst.passengers[0].pickup = pt(0.0, 30.0);
        inst.passengers[0].dropoff = pt(5.0, 30.0);
        let run = run_batch(&Travel::Euclidean { speed_kmh: 60.0 }, &inst, &EngineConfig::default()).unwrap();
        assert!(run.result.routes.is_empty());
        let ctx = RoutingContext::new(&run.instance, &run.pd, 1e-9);
        assert!(verify_solution(&ctx, &run.result, 1e-9).passed());
    }

    #[test]
    fn lp_text_shape() {
        let inst = tiny(1);
        let pd = PdNetwork::build(&Travel::Euclidean { speed_kmh: 60.0 }, &inst).unwrap();
        let ctx = RoutingContext::new(&inst, &pd, 1e-9);
        let lp = export_mip(&ctx, None);
        assert!(lp.starts_with("\\ ride-sharing batch model\nMinimize\n obj:"));
        for section in ["Subject To\n", "Bounds\n", "Binaries\n", "End\n"] {
            assert!(lp.contains(section));
        }
        assert!(lp.contains(" leave_0: "));
        assert!(lp.contains(" t_0_0 = 0\n"));
        assert!(lp.contains(" q_0_0 = 0\n"));
        let pruned = export_mip(&ctx, Some(&[vec![]]));
        assert!(pruned.contains(" x_0_0_1\n"));
        assert!(!pruned.contains("z_0_0"));
    }
}
