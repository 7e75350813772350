//! Road network, shortest paths and the passenger-driver network.
//!
//! The passenger-driver (PD) network gives every participant its own origin
//! and destination node, even when several participants share a physical
//! location. Arcs between PD nodes carry shortest-path travel time (minutes)
//! and distance (km).

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Instance, Location, Point};

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("node {0} is not part of the road network")]
    UnknownNode(u32),
    #[error("node id {0} declared twice")]
    DuplicateNode(u32),
    #[error("link {from}->{to} has a negative or non-finite attribute")]
    BadLink { from: u32, to: u32 },
    #[error("no path from {from} to {to}")]
    NoPath { from: String, to: String },
    #[error("{0}")]
    Mismatch(String),
}

/// Travel time (minutes) and distance (km) of a shortest path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathCost {
    pub time: f64,
    pub dist: f64,
}

impl PathCost {
    pub const ZERO: PathCost = PathCost { time: 0.0, dist: 0.0 };
    pub const UNREACHABLE: PathCost = PathCost { time: f64::INFINITY, dist: f64::INFINITY };

    pub fn is_reachable(&self) -> bool {
        self.time.is_finite()
    }

    fn key_cmp(&self, other: &PathCost) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.dist.total_cmp(&other.dist))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNode {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadLink {
    pub from: u32,
    pub to: u32,
    pub tt_min: f64,
    pub len_km: f64,
}

/// On-disk form of a road network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNetworkFile {
    pub nodes: Vec<RoadNode>,
    pub links: Vec<RoadLink>,
}

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<RoadNode>,
    links: Vec<RoadLink>,
    index: HashMap<u32, usize>,
    // (head, tt, len)
    adj: Vec<Vec<(usize, f64, f64)>>,
}

#[derive(Clone, Copy)]
struct HeapEntry {
    cost: PathCost,
    node: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    // Min-heap on (time, dist, node).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .key_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl RoadNetwork {
    pub fn new(nodes: Vec<RoadNode>, links: Vec<RoadLink>) -> Result<Self, NetworkError> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id, i).is_some() {
                return Err(NetworkError::DuplicateNode(n.id));
            }
        }
        let mut adj = vec![Vec::new(); nodes.len()];
        for l in &links {
            let ok = |v: f64| v.is_finite() && v >= 0.0;
            if !ok(l.tt_min) || !ok(l.len_km) {
                return Err(NetworkError::BadLink { from: l.from, to: l.to });
            }
            let a = *index.get(&l.from).ok_or(NetworkError::UnknownNode(l.from))?;
            let b = *index.get(&l.to).ok_or(NetworkError::UnknownNode(l.to))?;
            adj[a].push((b, l.tt_min, l.len_km));
        }
        Ok(RoadNetwork { nodes, links, index, adj })
    }

    pub fn from_file(file: RoadNetworkFile) -> Result<Self, NetworkError> {
        Self::new(file.nodes, file.links)
    }

    pub fn to_file(&self) -> RoadNetworkFile {
        RoadNetworkFile { nodes: self.nodes.clone(), links: self.links.clone() }
    }

    pub fn nodes(&self) -> &[RoadNode] {
        &self.nodes
    }

    pub fn links(&self) -> &[RoadLink] {
        &self.links
    }

    pub fn node_index(&self, id: u32) -> Result<usize, NetworkError> {
        self.index.get(&id).copied().ok_or(NetworkError::UnknownNode(id))
    }

    pub fn point(&self, id: u32) -> Option<Point> {
        self.index.get(&id).map(|&i| Point::new(self.nodes[i].x, self.nodes[i].y))
    }

    /// Single-source Dijkstra over internal node indices. Ties in travel time
    /// are broken by smaller distance.
    pub fn dijkstra(&self, source: usize) -> Vec<PathCost> {
        let mut best = vec![PathCost::UNREACHABLE; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        best[source] = PathCost::ZERO;
        heap.push(HeapEntry { cost: PathCost::ZERO, node: source });
        while let Some(HeapEntry { cost, node }) = heap.pop() {
            if cost.key_cmp(&best[node]) == Ordering::Greater {
                continue;
            }
            for &(head, tt, len) in &self.adj[node] {
                let next = PathCost { time: cost.time + tt, dist: cost.dist + len };
                if next.key_cmp(&best[head]) == Ordering::Less {
                    best[head] = next;
                    heap.push(HeapEntry { cost: next, node: head });
                }
            }
        }
        best
    }

    /// Minimum-time path from `a` to `b`; the distance is that of the
    /// time-optimal path.
    pub fn shortest_path(&self, a: u32, b: u32) -> Result<PathCost, NetworkError> {
        let ia = self.node_index(a)?;
        let ib = self.node_index(b)?;
        let cost = self.dijkstra(ia)[ib];
        if cost.is_reachable() {
            Ok(cost)
        } else {
            Err(NetworkError::NoPath { from: a.to_string(), to: b.to_string() })
        }
    }

    /// Largest straight-line speed (km/h) any link allows, measured from the
    /// node coordinates. Infinite when a link of zero time joins two distinct
    /// points.
    pub fn max_speed(&self) -> f64 {
        let mut v: f64 = 0.0;
        for l in &self.links {
            let a = &self.nodes[self.index[&l.from]];
            let b = &self.nodes[self.index[&l.to]];
            let e = (a.x - b.x).hypot(a.y - b.y);
            if e == 0.0 {
                continue;
            }
            if l.tt_min <= 0.0 {
                return f64::INFINITY;
            }
            v = v.max(e / l.tt_min * 60.0);
        }
        v
    }
}

/// How travel times and distances are obtained.
#[derive(Debug, Clone)]
pub enum Travel {
    /// Straight-line travel at a constant speed (grid instances).
    Euclidean { speed_kmh: f64 },
    Road(RoadNetwork),
}

impl Travel {
    /// Speed bound used by geometric pruning.
    pub fn max_speed(&self) -> f64 {
        match self {
            Travel::Euclidean { speed_kmh } => *speed_kmh,
            Travel::Road(net) => net.max_speed(),
        }
    }

    pub fn coordinates(&self, loc: &Location) -> Result<Point, NetworkError> {
        match (self, loc) {
            (_, Location::Point(p)) => Ok(*p),
            (Travel::Road(net), Location::Node(id)) => {
                net.point(*id).ok_or(NetworkError::UnknownNode(*id))
            }
            (Travel::Euclidean { .. }, Location::Node(id)) => Err(NetworkError::Mismatch(
                format!("node location {id} needs a road network"),
            )),
        }
    }

    /// Shortest path between two participant locations.
    pub fn path(&self, a: &Location, b: &Location) -> Result<PathCost, NetworkError> {
        match self {
            Travel::Euclidean { speed_kmh } => {
                let pa = self.coordinates(a)?;
                let pb = self.coordinates(b)?;
                Ok(euclid_cost(&pa, &pb, *speed_kmh))
            }
            Travel::Road(net) => match (a, b) {
                (Location::Node(x), Location::Node(y)) => net.shortest_path(*x, *y),
                _ => Err(NetworkError::Mismatch(
                    "coordinate location used with a road network".into(),
                )),
            },
        }
    }
}

fn euclid_cost(a: &Point, b: &Point, speed_kmh: f64) -> PathCost {
    let dist = a.distance(b);
    PathCost { time: dist / speed_kmh * 60.0, dist }
}

/// Direct (drive-alone) trip of every participant.
#[derive(Debug, Clone)]
pub struct DirectTrips {
    pub drivers: Vec<Option<PathCost>>,
    pub passengers: Vec<Option<PathCost>>,
}

pub fn direct_trips(travel: &Travel, instance: &Instance) -> Result<DirectTrips, NetworkError> {
    let mut drivers = Vec::with_capacity(instance.drivers.len());
    for d in &instance.drivers {
        drivers.push(reachable(travel.path(&d.origin, &d.destination))?);
    }
    let mut passengers = Vec::with_capacity(instance.passengers.len());
    for p in &instance.passengers {
        passengers.push(reachable(travel.path(&p.pickup, &p.dropoff))?);
    }
    Ok(DirectTrips { drivers, passengers })
}

fn reachable(r: Result<PathCost, NetworkError>) -> Result<Option<PathCost>, NetworkError> {
    match r {
        Ok(c) => Ok(Some(c)),
        Err(NetworkError::NoPath { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub role: Role,
    pub id: u32,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Driver,
    Passenger,
}

/// Drop participants whose own origin cannot reach their destination.
pub fn screen_participants(
    travel: &Travel,
    instance: &Instance,
) -> Result<(Instance, Vec<Rejection>), NetworkError> {
    let trips = direct_trips(travel, instance)?;
    let mut out = Instance { batch_id: instance.batch_id, ..Default::default() };
    let mut rejected = Vec::new();
    for (d, t) in instance.drivers.iter().zip(&trips.drivers) {
        if t.is_some() {
            out.drivers.push(d.clone());
        } else {
            rejected.push(Rejection {
                role: Role::Driver,
                id: d.id,
                reason: "destination unreachable from origin".into(),
            });
        }
    }
    for (p, t) in instance.passengers.iter().zip(&trips.passengers) {
        if t.is_some() {
            out.passengers.push(p.clone());
        } else {
            rejected.push(Rejection {
                role: Role::Passenger,
                id: p.id,
                reason: "dropoff unreachable from pickup".into(),
            });
        }
    }
    Ok((out, rejected))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PdKind {
    DriverOrigin,
    DriverDestination,
    Pickup,
    Dropoff,
}

/// A duplicated participant node of the passenger-driver network.
#[derive(Debug, Clone, PartialEq)]
pub struct PdNode {
    pub kind: PdKind,
    /// Index of the owner in `Instance::drivers` or `Instance::passengers`.
    pub owner: usize,
    pub location: Location,
    pub point: Option<Point>,
    site: usize,
}

#[derive(Debug, Clone)]
enum Metric {
    Euclidean { speed_kmh: f64 },
    // Dense matrix over distinct road nodes used by participants.
    Matrix { sites: usize, cost: Vec<PathCost> },
}

/// Complete graph over duplicated participant nodes.
///
/// Node numbering: driver `i` owns `2i` (origin) and `2i+1` (destination);
/// passenger `j` owns `2|V|+2j` (pickup) and `2|V|+2j+1` (dropoff).
#[derive(Debug, Clone)]
pub struct PdNetwork {
    nodes: Vec<PdNode>,
    n_drivers: usize,
    n_passengers: usize,
    metric: Metric,
    driver_direct: Vec<PathCost>,
    passenger_direct: Vec<PathCost>,
}

impl PdNetwork {
    /// Build the PD network. Fails with `NoPath` if some participant's own
    /// trip is unreachable; run [`screen_participants`] first to drop them.
    pub fn build(travel: &Travel, instance: &Instance) -> Result<Self, NetworkError> {
        let mut nodes = Vec::with_capacity(2 * (instance.drivers.len() + instance.passengers.len()));
        let mut push = |kind, owner, location: Location| -> Result<(), NetworkError> {
            let point = match travel {
                Travel::Euclidean { .. } => Some(travel.coordinates(&location)?),
                Travel::Road(net) => match location {
                    Location::Node(id) => {
                        net.node_index(id)?;
                        net.point(id)
                    }
                    Location::Point(_) => {
                        return Err(NetworkError::Mismatch(
                            "coordinate location used with a road network".into(),
                        ))
                    }
                },
            };
            nodes.push(PdNode { kind, owner, location, point, site: 0 });
            Ok(())
        };
        for (i, d) in instance.drivers.iter().enumerate() {
            push(PdKind::DriverOrigin, i, d.origin)?;
            push(PdKind::DriverDestination, i, d.destination)?;
        }
        for (j, p) in instance.passengers.iter().enumerate() {
            push(PdKind::Pickup, j, p.pickup)?;
            push(PdKind::Dropoff, j, p.dropoff)?;
        }

        let metric = match travel {
            Travel::Euclidean { speed_kmh } => Metric::Euclidean { speed_kmh: *speed_kmh },
            Travel::Road(net) => {
                let mut site_of_road: HashMap<usize, usize> = HashMap::new();
                let mut roads = Vec::new();
                for n in nodes.iter_mut() {
                    let Location::Node(id) = n.location else { unreachable!() };
                    let r = net.node_index(id)?;
                    let next = roads.len();
                    n.site = *site_of_road.entry(r).or_insert_with(|| {
                        roads.push(r);
                        next
                    });
                }
                let sites = roads.len();
                let mut cost = Vec::with_capacity(sites * sites);
                for &src in &roads {
                    let row = net.dijkstra(src);
                    cost.extend(roads.iter().map(|&dst| row[dst]));
                }
                Metric::Matrix { sites, cost }
            }
        };

        let mut pd = PdNetwork {
            nodes,
            n_drivers: instance.drivers.len(),
            n_passengers: instance.passengers.len(),
            metric,
            driver_direct: Vec::new(),
            passenger_direct: Vec::new(),
        };
        for (i, d) in instance.drivers.iter().enumerate() {
            let c = pd.arc(pd.driver_origin(i), pd.driver_destination(i));
            if !c.is_reachable() {
                return Err(NetworkError::NoPath {
                    from: format!("driver {} origin", d.id),
                    to: "destination".into(),
                });
            }
            pd.driver_direct.push(c);
        }
        for (j, p) in instance.passengers.iter().enumerate() {
            let c = pd.arc(pd.pickup(j), pd.dropoff(j));
            if !c.is_reachable() {
                return Err(NetworkError::NoPath {
                    from: format!("passenger {} pickup", p.id),
                    to: "dropoff".into(),
                });
            }
            pd.passenger_direct.push(c);
        }
        Ok(pd)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: usize) -> &PdNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[PdNode] {
        &self.nodes
    }

    pub fn n_drivers(&self) -> usize {
        self.n_drivers
    }

    pub fn n_passengers(&self) -> usize {
        self.n_passengers
    }

    pub fn driver_origin(&self, i: usize) -> usize {
        2 * i
    }

    pub fn driver_destination(&self, i: usize) -> usize {
        2 * i + 1
    }

    pub fn pickup(&self, j: usize) -> usize {
        2 * self.n_drivers + 2 * j
    }

    pub fn dropoff(&self, j: usize) -> usize {
        2 * self.n_drivers + 2 * j + 1
    }

    /// Shortest path between two PD nodes. Unreachable pairs carry infinite
    /// time and distance.
    pub fn arc(&self, a: usize, b: usize) -> PathCost {
        if a == b {
            return PathCost::ZERO;
        }
        match &self.metric {
            Metric::Euclidean { speed_kmh } => {
                // Every PD node has a point under Euclidean travel.
                let pa = self.nodes[a].point.unwrap();
                let pb = self.nodes[b].point.unwrap();
                euclid_cost(&pa, &pb, *speed_kmh)
            }
            Metric::Matrix { sites, cost } => {
                cost[self.nodes[a].site * sites + self.nodes[b].site]
            }
        }
    }

    /// τ(o_i, d_i) and l(o_i, d_i) of driver `i`.
    pub fn driver_direct(&self, i: usize) -> PathCost {
        self.driver_direct[i]
    }

    pub fn passenger_direct(&self, j: usize) -> PathCost {
        self.passenger_direct[j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Driver, PassengerRequest};

    fn node(id: u32, x: f64, y: f64) -> RoadNode {
        RoadNode { id, x, y }
    }

    fn link(from: u32, to: u32, tt: f64, len: f64) -> RoadLink {
        RoadLink { from, to, tt_min: tt, len_km: len }
    }

    #[test]
    fn single_link_and_identity() {
        let net = RoadNetwork::new(
            vec![node(1, 0.0, 0.0), node(2, 3.0, 0.0)],
            vec![link(1, 2, 5.0, 3.0)],
        )
        .unwrap();
        assert_eq!(net.shortest_path(1, 2).unwrap(), PathCost { time: 5.0, dist: 3.0 });
        assert_eq!(net.shortest_path(1, 1).unwrap(), PathCost::ZERO);
        assert!(matches!(net.shortest_path(2, 1), Err(NetworkError::NoPath { .. })));
        assert_eq!(net.shortest_path(1, 9), Err(NetworkError::UnknownNode(9)));
    }

    #[test]
    fn triangle_prefers_detour() {
        // a=1, b=2, c=3
        let net = RoadNetwork::new(
            vec![node(1, 0.0, 0.0), node(2, 1.0, 0.0), node(3, 0.0, 1.0)],
            vec![link(1, 2, 10.0, 1.0), link(1, 3, 2.0, 2.0), link(3, 2, 3.0, 2.5)],
        )
        .unwrap();
        assert_eq!(net.shortest_path(1, 2).unwrap(), PathCost { time: 5.0, dist: 4.5 });
    }

    #[test]
    fn equal_time_ties_take_shorter_distance() {
        let net = RoadNetwork::new(
            vec![node(1, 0.0, 0.0), node(2, 1.0, 0.0), node(3, 0.0, 1.0)],
            vec![link(1, 2, 4.0, 9.0), link(1, 3, 2.0, 1.0), link(3, 2, 2.0, 1.0)],
        )
        .unwrap();
        assert_eq!(net.shortest_path(1, 2).unwrap(), PathCost { time: 4.0, dist: 2.0 });
    }

    #[test]
    fn rejects_bad_networks() {
        assert_eq!(
            RoadNetwork::new(vec![node(1, 0.0, 0.0)], vec![link(1, 2, 1.0, 1.0)]).unwrap_err(),
            NetworkError::UnknownNode(2)
        );
        assert_eq!(
            RoadNetwork::new(vec![node(1, 0.0, 0.0), node(1, 1.0, 1.0)], vec![]).unwrap_err(),
            NetworkError::DuplicateNode(1)
        );
        assert!(matches!(
            RoadNetwork::new(
                vec![node(1, 0.0, 0.0), node(2, 1.0, 1.0)],
                vec![link(1, 2, -1.0, 1.0)]
            ),
            Err(NetworkError::BadLink { .. })
        ));
    }

    #[test]
    fn max_speed_from_coordinates() {
        let net = RoadNetwork::new(
            vec![node(1, 0.0, 0.0), node(2, 3.0, 4.0)],
            vec![link(1, 2, 10.0, 6.0)],
        )
        .unwrap();
        // 5 km straight line in 10 minutes.
        assert!((net.max_speed() - 30.0).abs() < 1e-12);
    }

    fn shared_node_instance() -> (Travel, Instance) {
        // Node 5 hosts the pickups of two requests.
        let net = RoadNetwork::new(
            vec![node(1, 0.0, 0.0), node(5, 1.0, 0.0), node(7, 2.0, 0.0)],
            vec![
                link(1, 5, 1.0, 1.0),
                link(5, 7, 1.0, 1.0),
                link(7, 5, 1.0, 1.0),
            ],
        )
        .unwrap();
        let drv = Driver {
            id: 0,
            origin: Location::Node(1),
            destination: Location::Node(7),
            t_ed: 0.0,
            capacity: 2,
            max_excess: 1.0,
        };
        let req = |id| PassengerRequest {
            id,
            pickup: Location::Node(5),
            dropoff: Location::Node(7),
            t_ed: 0.0,
            max_excess: 1.0,
            max_wait: 1.0,
            party: 1,
        };
        (
            Travel::Road(net),
            Instance { batch_id: 0, drivers: vec![drv], passengers: vec![req(1), req(2)] },
        )
    }

    #[test]
    fn duplicates_shared_physical_nodes() {
        let (travel, inst) = shared_node_instance();
        let pd = PdNetwork::build(&travel, &inst).unwrap();
        assert_eq!(pd.len(), 6);
        let (a, b) = (pd.pickup(0), pd.pickup(1));
        assert_ne!(a, b);
        assert_eq!(pd.node(a).location, pd.node(b).location);
        assert_eq!(pd.node(a).owner, 0);
        assert_eq!(pd.node(b).owner, 1);
        assert_eq!(pd.arc(a, b), PathCost::ZERO);
        assert_eq!(pd.arc(pd.driver_origin(0), pd.dropoff(1)), PathCost { time: 2.0, dist: 2.0 });
        for i in 0..pd.len() {
            assert_eq!(pd.arc(i, i), PathCost::ZERO);
        }
    }

    #[test]
    fn pd_counts() {
        let mk = |nd: usize, np: usize| {
            let p = |x: f64| Location::Point(Point::new(x, 0.0));
            Instance {
                batch_id: 0,
                drivers: (0..nd)
                    .map(|i| Driver {
                        id: i as u32,
                        origin: p(0.0),
                        destination: p(5.0),
                        t_ed: 0.0,
                        capacity: 1,
                        max_excess: 0.0,
                    })
                    .collect(),
                passengers: (0..np)
                    .map(|j| PassengerRequest {
                        id: (100 + j) as u32,
                        pickup: p(1.0),
                        dropoff: p(2.0),
                        t_ed: 0.0,
                        max_excess: 0.0,
                        max_wait: 0.0,
                        party: 1,
                    })
                    .collect(),
            }
        };
        let travel = Travel::Euclidean { speed_kmh: 60.0 };
        let pd = PdNetwork::build(&travel, &mk(1, 0)).unwrap();
        assert_eq!(pd.len(), 2);
        assert_eq!(pd.driver_direct(0), PathCost { time: 5.0, dist: 5.0 });
        assert_eq!(PdNetwork::build(&travel, &mk(2, 3)).unwrap().len(), 10);
    }

    #[test]
    fn screening_drops_unreachable_participants() {
        let (travel, mut inst) = shared_node_instance();
        // 7 -> 1 is unreachable.
        inst.passengers[1].pickup = Location::Node(7);
        inst.passengers[1].dropoff = Location::Node(1);
        assert!(matches!(PdNetwork::build(&travel, &inst), Err(NetworkError::NoPath { .. })));
        let (ok, rejected) = screen_participants(&travel, &inst).unwrap();
        assert_eq!(ok.passengers.len(), 1);
        assert_eq!(rejected.len(), 1);
        assert_eq!(rejected[0].id, 2);
        assert!(PdNetwork::build(&travel, &ok).is_ok());
    }
}
