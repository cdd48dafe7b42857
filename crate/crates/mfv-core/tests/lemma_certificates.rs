//! Inequality certificates relating plans, shifts, composition, and the
//! dynamics, checked on random instances.

mod common;

use common::*;
use mfv_core::{
    bundle_distance, compose, compose_plans, dist_to_vectogram, evaluate, feasibility_residual,
    lifted_metric, rescale, shift, tangency_estimate, torus_distance, vectogram, wasserstein1,
    wasserstein1_cost, AtomicMeasure, ControlSystem, LiftedMeasure, SetOracle, TorusPoint,
    Velocity,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn optimal_plan_composition_contracts_shifts() {
    // Shifting through a lifted measure and through its pullback along an
    // optimal plan differ by at most the plan's transport distance.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..120 {
        let d = rng.gen_range(1..=2usize);
        let m_prime = random_measure(&mut rng, d, 5);
        let m = random_measure(&mut rng, d, 5);
        let beta = random_lifted(&mut rng, &m, 3, 2.0);
        let tau = rng.gen_range(0.01..1.0);
        let (w1, plan) = wasserstein1(&m_prime, &m).unwrap();
        let pulled = compose(&plan, &beta).unwrap();
        let lhs =
            wasserstein1_cost(&shift(&beta, tau).unwrap(), &shift(&pulled, tau).unwrap()).unwrap();
        assert!(
            lhs <= w1 + 1e-9,
            "case {case}: shift gap {lhs} exceeds W1 {w1}"
        );
    }
}

#[test]
fn residual_transfer_is_double_lipschitz() {
    // Pulling a lifted measure to a nearby base moves its feasibility
    // residual by at most twice the Lipschitz constant times the distance.
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let sys = ControlSystem::mean_drift(0.7, vec![vec![-1.0], vec![0.5], vec![1.0]], 1).unwrap();
    let l = sys.lipschitz_l();
    for case in 0..100 {
        let m_prime = random_measure(&mut rng, 1, 5);
        let m = random_measure(&mut rng, 1, 5);
        let beta = random_lifted(&mut rng, &m, 3, 1.5);
        let (w1, plan) = wasserstein1(&m_prime, &m).unwrap();
        let pulled = compose(&plan, &beta).unwrap();
        let r_m = feasibility_residual(&beta, &sys).unwrap();
        let r_mp = feasibility_residual(&pulled, &sys).unwrap();
        assert!(
            (r_m - r_mp).abs() <= 2.0 * l * w1 + 1e-8,
            "case {case}: |{r_m} - {r_mp}| exceeds 2L W1 = {}",
            2.0 * l * w1
        );
    }
}

#[test]
fn shift_distance_is_tau_times_lifted_metric() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for case in 0..120 {
        let d = rng.gen_range(1..=2usize);
        let base = random_measure(&mut rng, d, 5);
        let b1 = random_lifted(&mut rng, &base, 3, 2.0);
        let b2 = random_lifted(&mut rng, &base, 3, 2.0);
        let tau = rng.gen_range(0.01..0.75);
        let lhs = wasserstein1_cost(&shift(&b1, tau).unwrap(), &shift(&b2, tau).unwrap()).unwrap();
        let rhs = tau * lifted_metric(&b1, &b2, 1.0).unwrap();
        assert!(
            lhs <= rhs + 1e-9,
            "case {case}: {lhs} exceeds tau * metric = {rhs}"
        );
    }
}

#[test]
fn evaluation_is_a_contraction_of_the_bundle_metric() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for case in 0..80 {
        let d = rng.gen_range(1..=2usize);
        let grid = vec![0.0, 0.3, 0.65, 1.0];
        let b1 = random_bundle(&mut rng, &grid, d, 5, 1.5);
        let b2 = random_bundle(&mut rng, &grid, d, 5, 1.5);
        let bd = bundle_distance(&b1, &b2).unwrap();
        for &t in &grid {
            let w =
                wasserstein1_cost(&evaluate(&b1, t).unwrap(), &evaluate(&b2, t).unwrap()).unwrap();
            assert!(
                w <= bd + 1e-9,
                "case {case} t={t}: marginal distance {w} exceeds bundle distance {bd}"
            );
        }
    }
}

#[test]
fn vectogram_distance_is_lipschitz_in_state_and_measure() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let sys = ControlSystem::mean_drift(0.9, vec![vec![-1.0], vec![1.0]], 1).unwrap();
    let l = sys.lipschitz_l();
    for case in 0..120 {
        let x1 = random_point(&mut rng, 1);
        let x2 = random_point(&mut rng, 1);
        let m1 = random_measure(&mut rng, 1, 5);
        let m2 = random_measure(&mut rng, 1, 5);
        let v = random_velocity(&mut rng, 1, 3.0);
        let d1 = dist_to_vectogram(&v, &vectogram(&sys, &x1, &m1).unwrap()).unwrap();
        let d2 = dist_to_vectogram(&v, &vectogram(&sys, &x2, &m2).unwrap()).unwrap();
        let bound = l * (torus_distance(&x1, &x2).unwrap() + wasserstein1_cost(&m1, &m2).unwrap());
        assert!(
            (d1 - d2).abs() <= bound + 1e-8,
            "case {case}: |{d1} - {d2}| exceeds L (rho + W1) = {bound}"
        );
    }
}

#[test]
fn vectogram_distance_is_one_lipschitz_in_the_velocity() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let sys = ControlSystem::mean_drift(0.5, vec![vec![-1.0], vec![0.2]], 1).unwrap();
    for case in 0..120 {
        let x = random_point(&mut rng, 1);
        let m = random_measure(&mut rng, 1, 4);
        let verts = vectogram(&sys, &x, &m).unwrap();
        let v1 = random_velocity(&mut rng, 1, 3.0);
        let v2 = random_velocity(&mut rng, 1, 3.0);
        let d1 = dist_to_vectogram(&v1, &verts).unwrap();
        let d2 = dist_to_vectogram(&v2, &verts).unwrap();
        assert!(
            (d1 - d2).abs() <= v1.dist(&v2) + 1e-10,
            "case {case}: |{d1} - {d2}| exceeds |v1 - v2| = {}",
            v1.dist(&v2)
        );
    }
}

#[test]
fn plan_composition_is_associative() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    for case in 0..100 {
        let d = rng.gen_range(1..=2usize);
        let m1 = random_measure(&mut rng, d, 3);
        let m2 = random_measure(&mut rng, d, 3);
        let m3 = random_measure(&mut rng, d, 3);
        let m4 = random_measure(&mut rng, d, 3);
        let (_, p12) = wasserstein1(&m1, &m2).unwrap();
        let (_, p23) = wasserstein1(&m2, &m3).unwrap();
        let (_, p34) = wasserstein1(&m3, &m4).unwrap();
        let left = compose_plans(&compose_plans(&p12, &p23).unwrap(), &p34).unwrap();
        let right = compose_plans(&p12, &compose_plans(&p23, &p34).unwrap()).unwrap();
        for (rl, rr) in left.mass().iter().zip(right.mass()) {
            for (a, b) in rl.iter().zip(rr) {
                assert!((a - b).abs() <= 1e-12, "case {case}: entries {a} vs {b}");
            }
        }
    }
}

#[test]
fn composing_with_a_plan_lands_on_its_source_marginal() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    for _ in 0..60 {
        let d = rng.gen_range(1..=2usize);
        let m_prime = random_measure(&mut rng, d, 5);
        let m = random_measure(&mut rng, d, 5);
        let beta = random_lifted(&mut rng, &m, 3, 2.0);
        let (_, plan) = wasserstein1(&m_prime, &m).unwrap();
        let pulled = compose(&plan, &beta).unwrap();
        assert!(pulled.base().same_measure(&m_prime, 1e-12));
        for fiber in pulled.fibers() {
            let s: f64 = fiber.iter().map(|&(_, w)| w).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn tangency_ladder_scales_exactly_under_rescaling() {
    // Rescaling velocities by a power of two and dividing the ladder top by
    // the same factor reproduces the shifted measures bit for bit, so the
    // ratios scale by exactly that factor and the verdict is preserved.
    let k = SetOracle::dirac_pair_family(0.5, 0.25, 1e-3).unwrap();
    let beta = LiftedMeasure::new(
        AtomicMeasure::dirac(TorusPoint::scalar(0.5)),
        vec![vec![
            (Velocity::scalar(-1.0), 0.5),
            (Velocity::scalar(1.0), 0.5),
        ]],
    )
    .unwrap();
    let tau0 = 0.1;
    let levels = 5;
    let base_report = tangency_estimate(&beta, &k, tau0, levels).unwrap();
    assert_eq!(
        base_report.verdict,
        mfv_core::TangencyVerdict::Tangent,
        "baseline must be tangent"
    );
    for a in [0.5, 2.0] {
        let scaled = rescale(&beta, a);
        let report = tangency_estimate(&scaled, &k, tau0 / a, levels).unwrap();
        assert_eq!(report.verdict, base_report.verdict, "a={a}");
        for (r_scaled, r_base) in report.ratios.iter().zip(&base_report.ratios) {
            assert_eq!(
                r_scaled.to_bits(),
                (a * r_base).to_bits(),
                "a={a}: ratio {r_scaled} vs {}",
                a * r_base
            );
        }
    }
}
