//! Shared generators and independent oracles for the integration suites.
//!
//! The brute-force Wasserstein oracle enumerates the basic feasible solutions
//! of the transportation polytope (one per spanning tree of the bipartite
//! support graph), so it shares no code path with the production solver.
#![allow(dead_code)]

use mfv_core::{AtomicMeasure, LiftedMeasure, PathBundle, TorusPoint, Trajectory, Velocity};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_point(rng: &mut ChaCha8Rng, d: usize) -> TorusPoint {
    TorusPoint::new((0..d).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

pub fn random_velocity(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Velocity {
    Velocity::new((0..d).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

pub fn random_measure(rng: &mut ChaCha8Rng, d: usize, max_atoms: usize) -> AtomicMeasure {
    let n = rng.gen_range(1..=max_atoms);
    let atoms: Vec<TorusPoint> = (0..n).map(|_| random_point(rng, d)).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.05).collect();
    let total: f64 = raw.iter().sum();
    AtomicMeasure::new(atoms, raw.iter().map(|w| w / total).collect()).unwrap()
}

pub fn random_lifted(
    rng: &mut ChaCha8Rng,
    base: &AtomicMeasure,
    max_velocities: usize,
    scale: f64,
) -> LiftedMeasure {
    let d = base.dim();
    let fibers = (0..base.len())
        .map(|_| {
            let k = rng.gen_range(1..=max_velocities);
            let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 0.05).collect();
            let total: f64 = raw.iter().sum();
            (0..k)
                .map(|i| (random_velocity(rng, d, scale), raw[i] / total))
                .collect()
        })
        .collect();
    LiftedMeasure::new(base.clone(), fibers).unwrap()
}

pub fn random_bundle(
    rng: &mut ChaCha8Rng,
    grid: &[f64],
    d: usize,
    max_trajs: usize,
    speed: f64,
) -> PathBundle {
    let n = rng.gen_range(1..=max_trajs);
    let trajectories: Vec<Trajectory> = (0..n)
        .map(|_| {
            let start = random_point(rng, d);
            let disps = grid
                .windows(2)
                .map(|w| random_velocity(rng, d, speed).scaled(w[1] - w[0]))
                .collect();
            Trajectory::new(start, disps).unwrap()
        })
        .collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.05).collect();
    let total: f64 = raw.iter().sum();
    PathBundle::new(
        grid.to_vec(),
        trajectories,
        raw.iter().map(|w| w / total).collect(),
    )
    .unwrap()
}

/// A random 1-Lipschitz function on the torus: a minimum of distance cones.
pub fn random_lipschitz_fn(rng: &mut ChaCha8Rng, d: usize) -> impl Fn(&TorusPoint) -> f64 {
    let anchors: Vec<(TorusPoint, f64)> = (0..rng.gen_range(1..=4usize))
        .map(|_| (random_point(rng, d), rng.gen::<f64>()))
        .collect();
    move |x: &TorusPoint| {
        anchors
            .iter()
            .map(|(y, g)| g + mfv_core::torus_distance(x, y).unwrap())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Exact transportation value by enumerating all spanning-tree bases of the
/// bipartite support graph. Only for tiny instances.
pub fn brute_force_w1(m1: &AtomicMeasure, m2: &AtomicMeasure) -> f64 {
    let n = m1.len();
    let m = m2.len();
    assert!(n <= 4 && m <= 4, "oracle is for tiny instances");
    let cost: Vec<Vec<f64>> = m1
        .atoms()
        .iter()
        .map(|a| {
            m2.atoms()
                .iter()
                .map(|b| mfv_core::torus_distance(a, b).unwrap())
                .collect()
        })
        .collect();

    let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let need = n + m - 1;
    let mut best = f64::INFINITY;

    // Lexicographic enumeration of all edge subsets of spanning-tree size.
    let mut chosen: Vec<usize> = (0..need).collect();
    loop {
        if let Some(value) = tree_cost(&edges, &chosen, n, m, m1.weights(), m2.weights(), &cost) {
            if value < best {
                best = value;
            }
        }
        // Advance to the next combination.
        let mut k = need;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if chosen[k] != edges.len() - need + k {
                break;
            }
        }
        chosen[k] += 1;
        for i in k + 1..need {
            chosen[i] = chosen[i - 1] + 1;
        }
    }
}

/// Basic solution carried by one candidate edge set, if it is a feasible
/// spanning tree; solved by iterated leaf elimination.
fn tree_cost(
    edges: &[(usize, usize)],
    chosen: &[usize],
    n: usize,
    m: usize,
    supply: &[f64],
    demand: &[f64],
    cost: &[Vec<f64>],
) -> Option<f64> {
    let nodes = n + m;
    let mut degree = vec![0usize; nodes];
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    for (slot, &e) in chosen.iter().enumerate() {
        let (i, j) = edges[e];
        degree[i] += 1;
        degree[n + j] += 1;
        incident[i].push(slot);
        incident[n + j].push(slot);
    }
    // A spanning tree on a connected bipartite graph has every degree >= 1.
    if degree.contains(&0) {
        return None;
    }

    let mut balance: Vec<f64> = supply
        .iter()
        .copied()
        .chain(demand.iter().copied())
        .collect();
    let mut used = vec![false; chosen.len()];
    let mut flow = vec![0.0f64; chosen.len()];
    let mut remaining = chosen.len();
    while remaining > 0 {
        let leaf = (0..nodes).find(|&v| degree[v] == 1)?;
        let slot = *incident[leaf]
            .iter()
            .find(|&&s| !used[s])
            .expect("leaf has one unused edge");
        let (i, j) = edges[chosen[slot]];
        let other = if leaf < n { n + j } else { i };
        flow[slot] = balance[leaf];
        if flow[slot] < -1e-12 {
            return None;
        }
        balance[other] -= balance[leaf];
        balance[leaf] = 0.0;
        used[slot] = true;
        degree[leaf] -= 1;
        degree[other] -= 1;
        incident[other].retain(|&s| s != slot);
        remaining -= 1;
    }
    let mut total = 0.0;
    for (slot, &e) in chosen.iter().enumerate() {
        let (i, j) = edges[e];
        total += flow[slot] * cost[i][j];
    }
    Some(total)
}
