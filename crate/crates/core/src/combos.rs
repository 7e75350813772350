//! Feasible request combinations per driver, grown one request at a time.
//!
//! A set of size k is only tried when all of its (k−1)-subsets are
//! feasible, and its tree is obtained by inserting the one missing request
//! into the tree of its lexicographically smallest (k−1)-subset.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::dtree::{DynamicTree, RoutingContext, Schedule};

#[derive(Debug, Clone)]
pub struct Combination {
    pub driver: usize,
    /// Sorted passenger indices.
    pub requests: Vec<usize>,
    pub tree: Arc<DynamicTree>,
    pub schedule: Schedule,
    /// Net cost γ (km): route distance minus the direct distances of the
    /// driver and of every passenger on board.
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ComboStats {
    /// Tree insertions performed (one per validated candidate set).
    pub insertions: usize,
}

/// γ = route distance − l(o_v, d_v) − Σ l(o_r, d_r).
pub fn net_cost(ctx: &RoutingContext, schedule: &Schedule, requests: &[usize]) -> f64 {
    let alone: f64 = requests.iter().map(|&j| ctx.pd.passenger_direct(j).dist).sum();
    schedule.distance - ctx.pd.driver_direct(schedule.driver).dist - alone
}

/// All feasible combinations of sizes 1..=`max_size` drawn from
/// `candidates` for `driver`.
pub fn generate_combinations(
    ctx: &RoutingContext,
    driver: usize,
    candidates: &[usize],
    max_size: usize,
) -> (Vec<Combination>, ComboStats) {
    let mut stats = ComboStats::default();
    let mut out: Vec<Combination> = Vec::new();
    let Ok(base) = DynamicTree::new(ctx, driver) else {
        return (out, stats);
    };
    let cap = ctx.instance.drivers[driver].capacity;
    let mut cands: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&j| ctx.instance.passengers[j].party <= cap)
        .collect();
    cands.sort_unstable();
    cands.dedup();

    let mut level: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for &j in &cands {
        stats.insertions += 1;
        if let Ok(tree) = base.insert_request(ctx, j) {
            level.insert(vec![j], out.len());
            out.push(make(ctx, driver, vec![j], tree));
        }
    }
    let singles: Vec<usize> = level.keys().map(|k| k[0]).collect();

    for _size in 2..=max_size {
        let mut next: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for (set, &idx) in &level {
            let last = *set.last().unwrap();
            for &r in singles.iter().filter(|&&r| r > last) {
                let mut union = set.clone();
                union.push(r);
                let closed = (0..set.len()).all(|skip| {
                    let sub: Vec<usize> = union
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != skip)
                        .map(|(_, &x)| x)
                        .collect();
                    level.contains_key(&sub)
                });
                if !closed {
                    continue;
                }
                stats.insertions += 1;
                if let Ok(tree) = out[idx].tree.insert_request(ctx, r) {
                    next.insert(union.clone(), out.len());
                    out.push(make(ctx, driver, union, tree));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        level = next;
    }
    (out, stats)
}

fn make(ctx: &RoutingContext, driver: usize, requests: Vec<usize>, tree: DynamicTree) -> Combination {
    let schedule = tree
        .best_schedule(ctx)
        .expect("a successful insertion leaves a destination leaf");
    let cost = net_cost(ctx, &schedule, &requests);
    Combination { driver, requests, tree: Arc::new(tree), schedule, cost }
}

/// Combinations of every driver, ordered by (driver, request set).
pub fn generate_all(
    ctx: &RoutingContext,
    candidates: &[Vec<usize>],
    max_size: usize,
    threads: usize,
) -> (Vec<Combination>, ComboStats) {
    let run = |i: usize| generate_combinations(ctx, i, &candidates[i], max_size);
    let per_driver: Vec<(Vec<Combination>, ComboStats)> = if threads <= 1 {
        (0..candidates.len()).map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        pool.install(|| (0..candidates.len()).into_par_iter().map(run).collect())
    };
    let mut all = Vec::new();
    let mut stats = ComboStats::default();
    for (mut combos, s) in per_driver {
        combos.sort_by(|a, b| a.requests.len().cmp(&b.requests.len()).then(a.requests.cmp(&b.requests)));
        stats.insertions += s.insertions;
        all.extend(combos);
    }
    (all, stats)
}

/// CSV dump: `driver,requests,route_km,gamma_km` with request ids joined by
/// `;`.
pub fn write_combinations_csv<W: Write>(
    ctx: &RoutingContext,
    combos: &[Combination],
    writer: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["driver", "requests", "route_km", "gamma_km"])?;
    for c in combos {
        let ids: Vec<String> = c
            .requests
            .iter()
            .map(|&j| ctx.instance.passengers[j].id.to_string())
            .collect();
        w.write_record([
            ctx.instance.drivers[c.driver].id.to_string(),
            ids.join(";"),
            format!("{:.6}", c.schedule.distance),
            format!("{:.6}", c.cost),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Driver, Instance, Location, PassengerRequest, Point};
    use crate::network::{PdNetwork, Travel};

    fn pt(x: f64, y: f64) -> Location {
        Location::Point(Point::new(x, y))
    }

    fn line_instance(cap: u32, reqs: &[((f64, f64), (f64, f64))]) -> Instance {
        Instance {
            batch_id: 0,
            drivers: vec![Driver {
                id: 0,
                origin: pt(0.0, 0.0),
                destination: pt(10.0, 0.0),
                t_ed: 0.0,
                capacity: cap,
                max_excess: 0.5,
            }],
            passengers: reqs
                .iter()
                .enumerate()
                .map(|(k, &(o, d))| PassengerRequest {
                    id: 100 + k as u32,
                    pickup: pt(o.0, o.1),
                    dropoff: pt(d.0, d.1),
                    t_ed: 0.0,
                    max_excess: 5.0,
                    max_wait: 10.0,
                    party: 1,
                })
                .collect(),
        }
    }

    #[test]
    fn single_candidate() {
        let inst = line_instance(2, &[((1.0, 0.0), (4.0, 0.0))]);
        let pd = PdNetwork::build(&Travel::Euclidean { speed_kmh: 60.0 }, &inst).unwrap();
        let ctx = RoutingContext::new(&inst, &pd, 1e-9);
        let (combos, stats) = generate_combinations(&ctx, 0, &[0], 4);
        assert_eq!(combos.len(), 1);
        assert_eq!(combos[0].requests, vec![0]);
        assert!((combos[0].cost + 3.0).abs() < 1e-12);
        assert_eq!(stats.insertions, 1);
    }

    #[test]
    fn capacity_one_excludes_overlapping_pair() {
        let inst = line_instance(1, &[((1.0, 0.0), (5.0, 0.0)), ((2.0, 0.0), (6.0, 0.0))]);
        let pd = PdNetwork::build(&Travel::Euclidean { speed_kmh: 60.0 }, &inst).unwrap();
        let ctx = RoutingContext::new(&inst, &pd, 1e-9);
        let (combos, _) = generate_combinations(&ctx, 0, &[0, 1], 4);
        let sizes: Vec<usize> = combos.iter().map(|c| c.requests.len()).collect();
        assert_eq!(sizes, vec![1, 1]);
    }

    #[test]
    fn turnover_allows_more_requests_than_seats() {
        let inst = line_instance(
            1,
            &[((1.0, 0.0), (2.0, 0.0)), ((3.0, 0.0), (4.0, 0.0)), ((5.0, 0.0), (6.0, 0.0))],
        );
        let pd = PdNetwork::build(&Travel::Euclidean { speed_kmh: 60.0 }, &inst).unwrap();
        let ctx = RoutingContext::new(&inst, &pd, 1e-9);
        let (combos, stats) = generate_combinations(&ctx, 0, &[0, 1, 2], 3);
        assert_eq!(combos.len(), 7);
        assert_eq!(combos.last().unwrap().requests, vec![0, 1, 2]);
        assert!(stats.insertions <= 3 + 3 + 1);
        // Everything zero-detour: γ = −Σ l_r.
        assert!((combos.last().unwrap().cost + 3.0).abs() < 1e-12);

        let (capped, _) = generate_combinations(&ctx, 0, &[0, 1, 2], 2);
        assert_eq!(capped.len(), 6);
    }

    #[test]
    fn csv_dump() {
        let inst = line_instance(2, &[((1.0, 0.0), (4.0, 0.0))]);
        let pd = PdNetwork::build(&Travel::Euclidean { speed_kmh: 60.0 }, &inst).unwrap();
        let ctx = RoutingContext::new(&inst, &pd, 1e-9);
        let (combos, _) = generate_all(&ctx, &[vec![0]], 4, 1);
        let mut buf = Vec::new();
        write_combinations_csv(&ctx, &combos, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "driver,requests,route_km,gamma_km\n0,100,10.000000,-3.000000\n");
    }
}
