//! Dynamic tree of feasible stop sequences for a single driver.
//!
//! The root is the driver's current position; every root-to-leaf path that
//! ends at the driver's destination is a feasible schedule for the requests
//! held by the tree. Inserting a request produces a new tree (the input is
//! left untouched) that contains every feasible way of weaving the new
//! pickup and dropoff into the existing schedules.
//!
//! Arrival times follow the no-waiting rule: the arrival at a stop is the
//! arrival at the previous stop plus the shortest-path time between them.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::model::Instance;
use crate::network::PdNetwork;

/// Shared read-only inputs of the routing layer.
#[derive(Debug, Clone, Copy)]
pub struct RoutingContext<'a> {
    pub instance: &'a Instance,
    pub pd: &'a PdNetwork,
    pub eps: f64,
}

impl<'a> RoutingContext<'a> {
    pub fn new(instance: &'a Instance, pd: &'a PdNetwork, eps: f64) -> Self {
        RoutingContext { instance, pd, eps }
    }

    fn pd_id(&self, driver: usize, stop: Stop) -> usize {
        match stop {
            Stop::Origin => self.pd.driver_origin(driver),
            Stop::Destination => self.pd.driver_destination(driver),
            Stop::Pickup(j) => self.pd.pickup(j),
            Stop::Dropoff(j) => self.pd.dropoff(j),
        }
    }
}

/// A stop of one driver's route. Request stops carry the passenger index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stop {
    Origin,
    Destination,
    Pickup(usize),
    Dropoff(usize),
}

impl Stop {
    fn load_delta(&self, instance: &Instance) -> i64 {
        match *self {
            Stop::Pickup(j) => instance.passengers[j].party as i64,
            Stop::Dropoff(j) => -(instance.passengers[j].party as i64),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub earliest: f64,
    pub latest: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestWindows {
    pub pickup: Window,
    pub dropoff: Window,
}

/// Earliest/latest arrival times of a pickup and its dropoff:
/// pickup `[t_ED, t_ED + Ω]`, dropoff `[t_ED + τ, t_ED + Ω + τ + Δ]`.
pub fn windows(t_ed: f64, max_wait: f64, tau: f64, max_excess: f64) -> RequestWindows {
    RequestWindows {
        pickup: Window { earliest: t_ed, latest: t_ed + max_wait },
        dropoff: Window { earliest: t_ed + tau, latest: t_ed + max_wait + tau + max_excess },
    }
}

/// Time windows of passenger `j`.
pub fn time_windows(ctx: &RoutingContext, j: usize) -> RequestWindows {
    let r = &ctx.instance.passengers[j];
    windows(r.t_ed, r.max_wait, ctx.pd.passenger_direct(j).time, r.max_excess)
}

/// Arrival window at driver `i`'s destination (no waiting allowance for
/// drivers): `[t_ED + τ, t_ED + τ + Δ]`.
pub fn driver_window(ctx: &RoutingContext, i: usize) -> Window {
    let d = &ctx.instance.drivers[i];
    let earliest = d.t_ed + ctx.pd.driver_direct(i).time;
    Window { earliest, latest: earliest + d.max_excess }
}

/// Latest dropoff time implied by the excess-time bound, which already
/// counts the wait: t_ED + τ + Δ.
pub fn dropoff_deadline(ctx: &RoutingContext, j: usize) -> f64 {
    let r = &ctx.instance.passengers[j];
    r.t_ed + ctx.pd.passenger_direct(j).time + r.max_excess
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfeasibleCause {
    TimeWindow,
    Capacity,
    NoDestinationLeaf,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("request cannot be served ({0:?})")]
    Infeasible(InfeasibleCause),
    #[error("request {0} is already in the tree")]
    Duplicate(usize),
    #[error("driver {0} cannot reach the destination in time")]
    NoPath(usize),
    #[error("stop {0:?} is not a child of the root")]
    UnknownStop(Stop),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub stop: Stop,
    /// Arrival time, minutes.
    pub time: f64,
    /// Occupancy after serving the stop.
    pub load: u32,
    /// Distance driven from the original departure, km.
    pub dist: f64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicTree {
    driver: usize,
    requests: Vec<usize>,
    nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledStop {
    pub stop: Stop,
    pub time: f64,
    pub load: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassengerTiming {
    pub request: usize,
    /// Waiting time ω; `None` when the pickup is no longer in the tree.
    pub wait: Option<f64>,
    /// Excess travel time δ (waiting included).
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub driver: usize,
    pub stops: Vec<ScheduledStop>,
    /// Route distance from the root, km.
    pub distance: f64,
    /// Route time from the root, minutes.
    pub duration: f64,
    /// Driver excess travel time δ_v.
    pub driver_excess: f64,
    pub passengers: Vec<PassengerTiming>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    NeedPickup,
    NeedDropoff,
    Done,
}

enum Placement {
    Placed(TreeNode),
    /// Violates an upper time bound; later positions will too.
    Late,
    /// Too early or over capacity here; a later position may work.
    Retry,
}

impl DynamicTree {
    /// Tree for a driver with no requests: origin followed by destination.
    pub fn new(ctx: &RoutingContext, driver: usize) -> Result<Self, TreeError> {
        let d = &ctx.instance.drivers[driver];
        let direct = ctx.pd.driver_direct(driver);
        if !direct.is_reachable() {
            return Err(TreeError::NoPath(driver));
        }
        let root = TreeNode {
            stop: Stop::Origin,
            time: d.t_ed,
            load: 0,
            dist: 0.0,
            parent: None,
            children: vec![1],
        };
        let leaf = TreeNode {
            stop: Stop::Destination,
            time: d.t_ed + direct.time,
            load: 0,
            dist: direct.dist,
            parent: Some(0),
            children: Vec::new(),
        };
        Ok(DynamicTree { driver, requests: Vec::new(), nodes: vec![root, leaf] })
    }

    pub fn driver(&self) -> usize {
        self.driver
    }

    /// Requests currently held, sorted.
    pub fn requests(&self) -> &[usize] {
        &self.requests
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    /// Number of complete schedules (destination leaves).
    pub fn schedule_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.stop == Stop::Destination).count()
    }

    /// New tree holding every feasible schedule of the current requests
    /// plus `request`.
    pub fn insert_request(
        &self,
        ctx: &RoutingContext,
        request: usize,
    ) -> Result<DynamicTree, TreeError> {
        if self.requests.contains(&request) {
            return Err(TreeError::Duplicate(request));
        }
        let mut ins = Inserter {
            ctx,
            old: self,
            request,
            out: Vec::with_capacity(self.nodes.len() * 3),
            late: false,
            capacity: false,
            placed_pickup: false,
        };
        let root = self.nodes[0].clone();
        let seed = TreeNode { children: Vec::new(), parent: None, ..root };
        match ins.grow(0, seed, Phase::NeedPickup) {
            Some(_) => {
                let mut requests = self.requests.clone();
                let pos = requests.binary_search(&request).unwrap_err();
                requests.insert(pos, request);
                Ok(DynamicTree { driver: self.driver, requests, nodes: ins.out })
            }
            None => {
                let cause = if ins.placed_pickup {
                    InfeasibleCause::NoDestinationLeaf
                } else if ins.capacity && !ins.late {
                    InfeasibleCause::Capacity
                } else {
                    InfeasibleCause::TimeWindow
                };
                Err(TreeError::Infeasible(cause))
            }
        }
    }

    /// Best schedule: minimum distance, then minimum time, then the
    /// lexicographically smallest stop sequence.
    pub fn best_schedule(&self, ctx: &RoutingContext) -> Option<Schedule> {
        let mut best: Option<(usize, Vec<usize>)> = None;
        for (i, n) in self.nodes.iter().enumerate() {
            if n.stop != Stop::Destination {
                continue;
            }
            let Some((b, bkeys)) = &best else {
                best = Some((i, self.path_keys(ctx, i)));
                continue;
            };
            let cur = &self.nodes[*b];
            let ord = n
                .dist
                .total_cmp(&cur.dist)
                .then(n.time.total_cmp(&cur.time));
            let better = match ord {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => self.path_keys(ctx, i) < *bkeys,
            };
            if better {
                best = Some((i, self.path_keys(ctx, i)));
            }
        }
        best.map(|(leaf, _)| self.schedule_to(ctx, leaf))
    }

    /// Every complete schedule held by the tree.
    pub fn schedules(&self, ctx: &RoutingContext) -> Vec<Schedule> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.stop == Stop::Destination)
            .map(|(i, _)| self.schedule_to(ctx, i))
            .collect()
    }

    /// Drop everything before `reached`, a child of the root, which becomes
    /// the new root.
    pub fn advance_root(&self, reached: Stop) -> Result<DynamicTree, TreeError> {
        let start = self.nodes[0]
            .children
            .iter()
            .copied()
            .find(|&c| self.nodes[c].stop == reached)
            .ok_or(TreeError::UnknownStop(reached))?;
        let mut nodes = Vec::new();
        let mut stack = vec![(start, None)];
        while let Some((old, parent)) = stack.pop() {
            let idx = nodes.len();
            let n = &self.nodes[old];
            nodes.push(TreeNode { children: Vec::new(), parent, ..n.clone() });
            if let Some(p) = parent {
                let p: usize = p;
                nodes[p].children.push(idx);
            }
            for &c in n.children.iter().rev() {
                stack.push((c, Some(idx)));
            }
        }
        let mut requests = self.requests.clone();
        if let Stop::Dropoff(j) = reached {
            requests.retain(|&r| r != j);
        }
        Ok(DynamicTree { driver: self.driver, requests, nodes })
    }

    fn path_to(&self, leaf: usize) -> Vec<usize> {
        let mut path = vec![leaf];
        let mut cur = leaf;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    fn path_keys(&self, ctx: &RoutingContext, leaf: usize) -> Vec<usize> {
        self.path_to(leaf)
            .into_iter()
            .map(|i| ctx.pd_id(self.driver, self.nodes[i].stop))
            .collect()
    }

    fn schedule_to(&self, ctx: &RoutingContext, leaf: usize) -> Schedule {
        let path = self.path_to(leaf);
        let root = &self.nodes[path[0]];
        let end = &self.nodes[leaf];
        let stops: Vec<ScheduledStop> = path
            .iter()
            .map(|&i| {
                let n = &self.nodes[i];
                ScheduledStop { stop: n.stop, time: n.time, load: n.load }
            })
            .collect();
        let d = &ctx.instance.drivers[self.driver];
        let driver_excess = end.time - d.t_ed - ctx.pd.driver_direct(self.driver).time;
        let mut passengers = Vec::new();
        for &j in &self.requests {
            let r = &ctx.instance.passengers[j];
            let pick = stops.iter().find(|s| s.stop == Stop::Pickup(j));
            let drop = stops.iter().find(|s| s.stop == Stop::Dropoff(j));
            if let Some(drop) = drop {
                passengers.push(PassengerTiming {
                    request: j,
                    wait: pick.map(|p| p.time - r.t_ed),
                    excess: drop.time - r.t_ed - ctx.pd.passenger_direct(j).time,
                });
            }
        }
        Schedule {
            driver: self.driver,
            distance: end.dist - root.dist,
            duration: end.time - root.time,
            driver_excess,
            passengers,
            stops,
        }
    }

    /// Indented text rendering: one node per line with arrival time and
    /// occupancy.
    pub fn dump_text(&self, ctx: &RoutingContext) -> String {
        let mut out = String::new();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, depth)) = stack.pop() {
            let n = &self.nodes[i];
            let _ = writeln!(
                out,
                "{}{} t={:.3} Q={}",
                "  ".repeat(depth),
                stop_label(ctx, self.driver, n.stop),
                n.time,
                n.load
            );
            for &c in n.children.iter().rev() {
                stack.push((c, depth + 1));
            }
        }
        out
    }

    /// Nested JSON rendering `{stop, t, q, children}`.
    pub fn dump_json(&self, ctx: &RoutingContext) -> Value {
        fn rec(tree: &DynamicTree, ctx: &RoutingContext, i: usize) -> Value {
            let n = &tree.nodes[i];
            let children: Vec<Value> = n.children.iter().map(|&c| rec(tree, ctx, c)).collect();
            json!({
                "stop": stop_label(ctx, tree.driver, n.stop),
                "t": n.time,
                "q": n.load,
                "children": children,
            })
        }
        rec(self, ctx, 0)
    }
}

/// Human-readable stop name using participant ids: `o_v1`, `d_v1`, `o_r7`,
/// `d_r7`.
pub fn stop_label(ctx: &RoutingContext, driver: usize, stop: Stop) -> String {
    let vid = ctx.instance.drivers[driver].id;
    match stop {
        Stop::Origin => format!("o_v{vid}"),
        Stop::Destination => format!("d_v{vid}"),
        Stop::Pickup(j) => format!("o_r{}", ctx.instance.passengers[j].id),
        Stop::Dropoff(j) => format!("d_r{}", ctx.instance.passengers[j].id),
    }
}

struct Inserter<'t, 'c> {
    ctx: &'t RoutingContext<'c>,
    old: &'t DynamicTree,
    request: usize,
    out: Vec<TreeNode>,
    late: bool,
    capacity: bool,
    placed_pickup: bool,
}

impl Inserter<'_, '_> {
    /// Copy the new-tree node `node` (whose remaining continuation is the
    /// subtree of `old` in the input tree) into the output, expanding it
    /// according to `phase`. Returns `None` if no destination leaf survives
    /// below it.
    fn grow(&mut self, old: usize, node: TreeNode, phase: Phase) -> Option<usize> {
        let idx = self.out.len();
        let is_leaf = node.stop == Stop::Destination;
        self.out.push(node);
        let mut kids = Vec::new();
        let old_tree = self.old;
        let old_children = &old_tree.nodes[old].children;

        match phase {
            Phase::NeedPickup => {
                match self.place(idx, Stop::Pickup(self.request)) {
                    Placement::Placed(n) => {
                        self.placed_pickup = true;
                        if let Some(k) = self.grow(old, n, Phase::NeedDropoff) {
                            kids.push(k);
                        }
                    }
                    Placement::Late => {
                        self.out.truncate(idx);
                        return None;
                    }
                    Placement::Retry => {}
                }
                // Times are unchanged until the pickup is placed.
                for &c in old_children {
                    let oc = &self.old.nodes[c];
                    if oc.stop == Stop::Destination {
                        continue;
                    }
                    let copy = TreeNode {
                        children: Vec::new(),
                        parent: Some(idx),
                        ..oc.clone()
                    };
                    if let Some(k) = self.grow(c, copy, Phase::NeedPickup) {
                        kids.push(k);
                    }
                }
            }
            Phase::NeedDropoff => {
                match self.place(idx, Stop::Dropoff(self.request)) {
                    Placement::Placed(n) => {
                        if let Some(k) = self.grow(old, n, Phase::Done) {
                            kids.push(k);
                        }
                    }
                    Placement::Late => {
                        self.out.truncate(idx);
                        return None;
                    }
                    Placement::Retry => {}
                }
                for &c in old_children {
                    let stop = self.old.nodes[c].stop;
                    if stop == Stop::Destination {
                        continue;
                    }
                    if let Placement::Placed(n) = self.place(idx, stop) {
                        if let Some(k) = self.grow(c, n, Phase::NeedDropoff) {
                            kids.push(k);
                        }
                    }
                }
            }
            Phase::Done => {
                for &c in old_children {
                    let stop = self.old.nodes[c].stop;
                    if let Placement::Placed(n) = self.place(idx, stop) {
                        if let Some(k) = self.grow(c, n, Phase::Done) {
                            kids.push(k);
                        }
                    }
                }
            }
        }

        if kids.is_empty() && !is_leaf {
            self.out.truncate(idx);
            return None;
        }
        self.out[idx].children = kids;
        Some(idx)
    }

    /// Arrival and occupancy of `stop` placed right after output node
    /// `parent`, checked against its time window and the capacity bounds.
    fn place(&mut self, parent: usize, stop: Stop) -> Placement {
        let ctx = self.ctx;
        let driver = self.old.driver;
        let p = &self.out[parent];
        let arc = ctx.pd.arc(ctx.pd_id(driver, p.stop), ctx.pd_id(driver, stop));
        let time = p.time + arc.time;
        let load = p.load as i64 + stop.load_delta(ctx.instance);
        let dist = p.dist + arc.dist;
        let eps = ctx.eps;
        let cap = ctx.instance.drivers[driver].capacity as i64;

        let (earliest, latest) = match stop {
            Stop::Pickup(j) => {
                let w = time_windows(ctx, j).pickup;
                (w.earliest, w.latest)
            }
            Stop::Dropoff(j) => (time_windows(ctx, j).dropoff.earliest, dropoff_deadline(ctx, j)),
            Stop::Destination => {
                let w = driver_window(ctx, driver);
                (w.earliest, w.latest)
            }
            Stop::Origin => unreachable!("the origin is never re-inserted"),
        };
        if !(time <= latest + eps) {
            self.late = true;
            return Placement::Late;
        }
        if time < earliest - eps {
            return Placement::Retry;
        }
        // max(0, q) <= Q <= min(c, c + q)
        let q = stop.load_delta(ctx.instance);
        if load < q.max(0) || load > cap.min(cap + q) {
            self.capacity = true;
            return Placement::Retry;
        }
        Placement::Placed(TreeNode {
            stop,
            time,
            load: load as u32,
            dist,
            parent: Some(parent),
            children: Vec::new(),
        })
    }
}
