//! Generators shared by the acceptance criteria.
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

/// A random 1-Lipschitz observable: a minimum of distance cones.
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
