//! Metric-axiom and oracle-agreement suites for the transport distances.

mod common;

use common::*;
use mfv_core::{
    dist_to_measure_set, lifted_metric, lifted_metric_joint_oracle, wasserstein1, AtomicMeasure,
    SetOracle, TorusPoint,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn wasserstein_matches_brute_force_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..120 {
        let d = rng.gen_range(1..=2usize);
        let m1 = random_measure(&mut rng, d, 4);
        let m2 = random_measure(&mut rng, d, 4);
        let (fast, _) = wasserstein1(&m1, &m2).unwrap();
        let slow = brute_force_w1(&m1, &m2);
        assert!(
            (fast - slow).abs() < 1e-10,
            "case {case}: solver {fast} vs enumeration {slow}"
        );
    }
}

#[test]
fn wasserstein_metric_axioms() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..150 {
        let d = rng.gen_range(1..=2usize);
        let m1 = random_measure(&mut rng, d, 6);
        let m2 = random_measure(&mut rng, d, 6);
        let m3 = random_measure(&mut rng, d, 6);

        let (ab, plan) = wasserstein1(&m1, &m2).unwrap();
        let (ba, _) = wasserstein1(&m2, &m1).unwrap();
        assert_eq!(ab.to_bits(), ba.to_bits(), "case {case}: symmetry");

        let (ac, _) = wasserstein1(&m1, &m3).unwrap();
        let (bc, _) = wasserstein1(&m2, &m3).unwrap();
        assert!(
            ac <= ab + bc + 1e-9,
            "case {case}: triangle {ac} > {ab} + {bc}"
        );

        let (self_dist, _) = wasserstein1(&m1, &m1).unwrap();
        assert_eq!(self_dist, 0.0, "case {case}: identity");
        if !m1.same_measure(&m2, 1e-9) {
            assert!(ab > 0.0, "case {case}: distinct measures at distance zero");
        }

        // The optimal plan is feasible and reproduces the optimal value.
        assert!((plan.cost().unwrap() - ab).abs() < 1e-10, "case {case}");
    }
}

#[test]
fn wasserstein_dominates_lipschitz_test_functions() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for case in 0..150 {
        let d = rng.gen_range(1..=2usize);
        let m1 = random_measure(&mut rng, d, 6);
        let m2 = random_measure(&mut rng, d, 6);
        let (w, _) = wasserstein1(&m1, &m2).unwrap();
        for _ in 0..4 {
            let phi = random_lipschitz_fn(&mut rng, d);
            let gap = (m1.expect(&phi) - m2.expect(&phi)).abs();
            assert!(
                gap <= w + 1e-9,
                "case {case}: dual gap {gap} exceeds W1 {w}"
            );
        }
    }
}

#[test]
fn lifted_metric_equals_joint_lp_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for case in 0..100 {
        let d = rng.gen_range(1..=2usize);
        let base = random_measure(&mut rng, d, 4);
        let b1 = random_lifted(&mut rng, &base, 3, 2.0);
        let b2 = random_lifted(&mut rng, &base, 3, 2.0);
        for p in [1.0, 2.0] {
            let fiberwise = lifted_metric(&b1, &b2, p).unwrap();
            let joint = lifted_metric_joint_oracle(&b1, &b2, p).unwrap();
            assert!(
                (fiberwise - joint).abs() < 1e-9,
                "case {case} p={p}: fiberwise {fiberwise} vs joint {joint}"
            );
        }
    }
}

#[test]
fn lifted_metric_axioms() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for case in 0..100 {
        let d = rng.gen_range(1..=2usize);
        let base = random_measure(&mut rng, d, 4);
        let b1 = random_lifted(&mut rng, &base, 3, 2.0);
        let b2 = random_lifted(&mut rng, &base, 3, 2.0);
        let b3 = random_lifted(&mut rng, &base, 3, 2.0);
        for p in [1.0, 2.0] {
            let ab = lifted_metric(&b1, &b2, p).unwrap();
            let ba = lifted_metric(&b2, &b1, p).unwrap();
            assert_eq!(ab.to_bits(), ba.to_bits(), "case {case} p={p}: symmetry");

            let ac = lifted_metric(&b1, &b3, p).unwrap();
            let bc = lifted_metric(&b2, &b3, p).unwrap();
            assert!(
                ac <= ab + bc + 1e-9,
                "case {case} p={p}: triangle {ac} > {ab} + {bc}"
            );

            assert_eq!(
                lifted_metric(&b1, &b1, p).unwrap(),
                0.0,
                "case {case} p={p}"
            );
            if !b1.same_lifted(&b2, 1e-9) {
                assert!(ab > 0.0, "case {case} p={p}: indiscernibles");
            }
        }
    }
}

#[test]
fn dirac_pair_projection_matches_hand_computation() {
    // The symmetric pair at parameter 0.3 lies outside the family (capped at
    // 0.25); its projection is the endpoint pair, at distance 0.05.
    let k = SetOracle::dirac_pair_family(0.5, 0.25, 1e-3).unwrap();
    let m = AtomicMeasure::new(
        vec![TorusPoint::scalar(0.2), TorusPoint::scalar(0.8)],
        vec![0.5, 0.5],
    )
    .unwrap();
    let (dist, witness) = dist_to_measure_set(&m, &k).unwrap();
    assert!((dist - 0.05).abs() < 1e-6, "distance {dist}");
    let endpoint = AtomicMeasure::new(
        vec![TorusPoint::scalar(0.25), TorusPoint::scalar(0.75)],
        vec![0.5, 0.5],
    )
    .unwrap();
    assert!(witness.same_measure(&endpoint, 1e-5));

    // A pair inside the family projects onto itself.
    let inside = AtomicMeasure::new(
        vec![TorusPoint::scalar(0.4), TorusPoint::scalar(0.6)],
        vec![0.5, 0.5],
    )
    .unwrap();
    let (dist_in, witness_in) = dist_to_measure_set(&inside, &k).unwrap();
    assert!(dist_in < 1e-9, "inside distance {dist_in}");
    assert!(witness_in.same_measure(&inside, 1e-5));
}

#[test]
fn brute_force_oracle_agrees_with_itself_on_known_value() {
    // Regression anchor for the oracle: two atoms onto one.
    let m1 = AtomicMeasure::new(
        vec![TorusPoint::scalar(0.0), TorusPoint::scalar(0.5)],
        vec![0.5, 0.5],
    )
    .unwrap();
    let m2 = AtomicMeasure::dirac(TorusPoint::scalar(0.25));
    assert!((brute_force_w1(&m1, &m2) - 0.25).abs() < 1e-12);
}

/// Line-interval oracle: for one-dimensional measures supported on an
/// interval shorter than half the period, circle and line distances agree on
/// every support pair, so the classical CDF formula gives the exact value.
fn cdf_w1_on_interval(m1: &AtomicMeasure, m2: &AtomicMeasure) -> f64 {
    let mut events: Vec<(f64, f64, f64)> = Vec::new();
    for (a, &w) in m1.atoms().iter().zip(m1.weights()) {
        events.push((a.coords()[0], w, 0.0));
    }
    for (a, &w) in m2.atoms().iter().zip(m2.weights()) {
        events.push((a.coords()[0], 0.0, w));
    }
    events.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut total = 0.0;
    let mut f1 = 0.0;
    let mut f2 = 0.0;
    for i in 0..events.len() {
        f1 += events[i].1;
        f2 += events[i].2;
        if i + 1 < events.len() {
            total += (f1 - f2).abs() * (events[i + 1].0 - events[i].0);
        }
    }
    total
}

#[test]
fn large_instances_match_the_cdf_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for &n in &[64usize, 256, 512] {
        let gen = |rng: &mut ChaCha8Rng| -> AtomicMeasure {
            let atoms = (0..n)
                .map(|_| TorusPoint::scalar(rng.gen_range(0.0..0.45)))
                .collect();
            let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.01).collect();
            let total: f64 = raw.iter().sum();
            AtomicMeasure::new(atoms, raw.iter().map(|w| w / total).collect()).unwrap()
        };
        let m1 = gen(&mut rng);
        let m2 = gen(&mut rng);
        let (fast, plan) = wasserstein1(&m1, &m2).unwrap();
        let exact = cdf_w1_on_interval(&m1, &m2);
        assert!(
            (fast - exact).abs() < 1e-10,
            "n={n}: solver {fast} vs CDF {exact}"
        );
        assert!((plan.cost().unwrap() - fast).abs() < 1e-10);
    }
}

#[test]
fn lifted_plan_couplings_have_fiber_marginals() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let d = rng.gen_range(1..=2usize);
        let base = random_measure(&mut rng, d, 4);
        let b1 = random_lifted(&mut rng, &base, 3, 2.0);
        let b2 = random_lifted(&mut rng, &base, 3, 2.0);
        let (_, plan) = mfv_core::lifted_metric_with_plan(&b1, &b2, 1.0).unwrap();
        for (i, coupling) in plan.couplings().iter().enumerate() {
            let f1 = &b1.fibers()[i];
            let f2 = &b2.fibers()[i];
            for (r, row) in coupling.iter().enumerate() {
                let s: f64 = row.iter().sum();
                assert!((s - f1[r].1).abs() <= 1e-10, "row {r} sum {s}");
            }
            for c in 0..f2.len() {
                let s: f64 = coupling.iter().map(|row| row[c]).sum();
                assert!((s - f2[c].1).abs() <= 1e-10, "col {c} sum {s}");
            }
        }
    }
}
