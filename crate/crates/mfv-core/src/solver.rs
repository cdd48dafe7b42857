//! Forward integration of the measure-valued dynamics and the
//! viability-tracking Euler scheme.
//!
//! Both schemes advect a finite particle family whose empirical measure is
//! the evolving state. The forward scheme follows a caller-supplied selector
//! of the vectogram; the viable scheme re-solves, at every step, the
//! pointwise viability condition at the projection of the current state onto
//! the constraint set, composes the witness back along an optimal plan, and
//! shifts. Certificates (distance to the set, feasibility residuals, speed
//! and flow-Lipschitz bounds) are reported as diagnostics rather than assumed.

use std::fmt;
use std::sync::Arc;

use crate::dynamics::{
    dist_to_step_aumann, dist_to_vectogram, feasibility_residual, vectogram, ControlSystem,
    MAX_AUMANN_PIECES,
};
use crate::lifted::compose;
use crate::measures::{wasserstein1, wasserstein1_cost, AtomicMeasure, MeasureSetOracle};
use crate::paths::{evaluate, PathBundle, Trajectory};
use crate::torus::{torus_distance, TorusPoint, Velocity};
use crate::viability::{viability_condition_check, SetOracle, ViabilityCheckParams};
use crate::{Error, Result};

/// Which scheme a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    ForwardSelector,
    ViableTracking,
}

type CustomSelector = Arc<dyn Fn(&TorusPoint, &AtomicMeasure) -> Velocity + Send + Sync>;

/// A single-valued choice of velocity inside the vectogram.
#[derive(Clone)]
pub enum Selector {
    /// Follow one control of the system.
    ControlIndex(usize),
    /// A fixed velocity (must lie in the vectogram wherever it is used).
    Constant(Velocity),
    /// Arbitrary pure function of state and population measure.
    Custom(CustomSelector),
}

impl fmt::Debug for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::ControlIndex(k) => write!(f, "ControlIndex({k})"),
            Selector::Constant(v) => write!(f, "Constant({v:?})"),
            Selector::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Selector {
    fn eval(&self, sys: &ControlSystem, x: &TorusPoint, m: &AtomicMeasure) -> Result<Velocity> {
        match self {
            Selector::ControlIndex(k) => sys.eval(x, m, *k),
            Selector::Constant(v) => Ok(v.clone()),
            Selector::Custom(f) => Ok(f(x, m)),
        }
    }
}

/// Step grid and search budget for a run.
#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub horizon: f64,
    pub steps: usize,
    /// Particle cap; excess trajectories merge into nearest neighbors.
    pub max_trajectories: usize,
    /// Seed for the per-step witness searches.
    pub seed: u64,
    /// Tangency ladder length for the per-step witness search.
    pub witness_levels: usize,
    /// Score threshold for accepting a witness.
    pub witness_threshold: f64,
    /// Coordinate-descent restarts per witness search.
    pub witness_restarts: usize,
}

impl SolveConfig {
    pub fn new(horizon: f64, steps: usize) -> Self {
        Self {
            horizon,
            steps,
            max_trajectories: 4096,
            seed: 0,
            witness_levels: 4,
            witness_threshold: crate::viability::DEFAULT_TANGENCY_THRESHOLD,
            witness_restarts: 20,
        }
    }

    fn validate(&self) -> Result<f64> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidConfig("horizon must be positive".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("need at least one step".into()));
        }
        if self.max_trajectories == 0 {
            return Err(Error::InvalidConfig(
                "trajectory cap must be positive".into(),
            ));
        }
        Ok(self.horizon / self.steps as f64)
    }
}

/// Per-step diagnostics; fields are populated according to the mode.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub time: f64,
    /// Distance of the pre-step state to the constraint set (viable mode).
    pub dist_to_k: Option<f64>,
    /// Final tangency ratio of the accepted witness (viable mode).
    pub witness_score: Option<f64>,
    /// Transport distance between the state and its projection (viable mode).
    pub w1_mu_nu: Option<f64>,
    /// Feasibility residual of the composed step velocity field.
    pub feasibility_residual: Option<f64>,
    /// Distance of the realized step displacement to the one-step reachable
    /// set (forward mode).
    pub aumann_residual: Option<f64>,
    /// Mass-weighted error introduced by trajectory-cap merges.
    pub merge_error: f64,
}

/// Output of a run: the trajectory bundle, its marginal flow on the grid, and
/// per-step diagnostics.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub mode: SolveMode,
    pub bundle: PathBundle,
    /// `flow[j] = evaluate(bundle, grid[j])`.
    pub flow: Vec<AtomicMeasure>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Distance of the final state to the constraint set (viable mode).
    pub final_dist_to_k: Option<f64>,
}

impl SolveResult {
    pub fn grid(&self) -> &[f64] {
        self.bundle.grid()
    }

    /// Largest recorded distance to the constraint set over the run.
    pub fn max_dist_to_k(&self) -> Option<f64> {
        let mut top: Option<f64> = self.final_dist_to_k;
        for d in &self.diagnostics {
            if let Some(x) = d.dist_to_k {
                top = Some(top.map_or(x, |t: f64| t.max(x)));
            }
        }
        top
    }

    /// Largest particle speed over all trajectory segments.
    pub fn max_segment_speed(&self) -> f64 {
        self.bundle.max_segment_speed()
    }

    /// Achieved per-step tracking rate in viable mode: the largest
    /// `(W1(state_j, projection_j) - slack) / t_j` over steps with `t_j > 0`.
    /// Passing the oracle resolution as `slack` discounts projection noise.
    pub fn tracking_rate(&self, slack: f64) -> Option<f64> {
        let mut rate: Option<f64> = None;
        for d in &self.diagnostics {
            if let Some(w) = d.w1_mu_nu {
                if d.time > 0.0 {
                    let r = ((w - slack).max(0.0)) / d.time;
                    rate = Some(rate.map_or(r, |cur: f64| cur.max(r)));
                }
            }
        }
        rate
    }

    /// Worst violation of `W1(flow(t'), flow(t'')) <= r |t' - t''|` over all
    /// grid pairs (negative when the bound holds with slack).
    pub fn flow_lipschitz_excess(&self, r: f64) -> Result<f64> {
        let grid = self.grid();
        let mut worst = f64::NEG_INFINITY;
        for i in 0..self.flow.len() {
            for j in i + 1..self.flow.len() {
                let w = wasserstein1_cost(&self.flow[i], &self.flow[j])?;
                worst = worst.max(w - r * (grid[j] - grid[i]));
            }
        }
        Ok(worst)
    }
}

struct Particle {
    start: TorusPoint,
    cover: Vec<f64>,
    weight: f64,
    displacements: Vec<Velocity>,
}

impl Particle {
    fn position(&self) -> TorusPoint {
        TorusPoint::new(self.cover.clone()).expect("finite cover position")
    }

    fn advance(&self, v: &Velocity, dt: f64, weight: f64) -> Particle {
        let mut cover = self.cover.clone();
        for (c, &vc) in cover.iter_mut().zip(v.comps()) {
            *c += dt * vc;
        }
        let mut displacements = self.displacements.clone();
        displacements.push(v.scaled(dt));
        Particle {
            start: self.start.clone(),
            cover,
            weight,
            displacements,
        }
    }
}

fn particles_from(m0: &AtomicMeasure) -> Vec<Particle> {
    m0.atoms()
        .iter()
        .zip(m0.weights())
        .map(|(x, &w)| Particle {
            start: x.clone(),
            cover: x.coords().to_vec(),
            weight: w,
            displacements: Vec::new(),
        })
        .collect()
}

fn measure_of(particles: &[Particle]) -> Result<AtomicMeasure> {
    AtomicMeasure::new(
        particles.iter().map(|p| p.position()).collect(),
        particles.iter().map(|p| p.weight).collect(),
    )
}

fn finish(
    mode: SolveMode,
    grid: Vec<f64>,
    particles: Vec<Particle>,
    diagnostics: Vec<StepDiagnostics>,
    final_dist_to_k: Option<f64>,
) -> Result<SolveResult> {
    let weights: Vec<f64> = particles.iter().map(|p| p.weight).collect();
    let trajectories = particles
        .into_iter()
        .map(|p| Trajectory::new(p.start, p.displacements))
        .collect::<Result<Vec<_>>>()?;
    let bundle = PathBundle::new(grid.clone(), trajectories, weights)?;
    let flow = grid
        .iter()
        .map(|&t| evaluate(&bundle, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(SolveResult {
        mode,
        bundle,
        flow,
        diagnostics,
        final_dist_to_k,
    })
}

/// Explicit Euler along a selector: every atom moves with the selected
/// velocity, which must stay inside the local vectogram.
pub fn solve_forward(
    m0: &AtomicMeasure,
    sys: &ControlSystem,
    selector: &Selector,
    cfg: &SolveConfig,
) -> Result<SolveResult> {
    let dt = cfg.validate()?;
    let grid: Vec<f64> = (0..=cfg.steps).map(|j| j as f64 * dt).collect();
    let mut particles = particles_from(m0);
    let mut diagnostics = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let m = measure_of(&particles)?;
        let mut velocities = Vec::with_capacity(particles.len());
        let mut aumann = 0.0;
        for (idx, p) in particles.iter().enumerate() {
            let x = p.position();
            let v = selector.eval(sys, &x, &m)?;
            let verts = vectogram(sys, &x, &m)?;
            let dist = dist_to_vectogram(&v, &verts)?;
            if dist > 1e-9 {
                return Err(Error::SelectorInfeasible {
                    step,
                    atom: idx,
                    dist,
                });
            }
            aumann += p.weight * dist_to_step_aumann(&v.scaled(dt), &[(dt, verts)])?;
            velocities.push(v);
        }
        particles = particles
            .iter()
            .zip(&velocities)
            .map(|(p, v)| p.advance(v, dt, p.weight))
            .collect();
        diagnostics.push(StepDiagnostics {
            time: grid[step],
            dist_to_k: None,
            witness_score: None,
            w1_mu_nu: None,
            feasibility_residual: None,
            aumann_residual: Some(aumann),
            merge_error: 0.0,
        });
    }
    finish(
        SolveMode::ForwardSelector,
        grid,
        particles,
        diagnostics,
        None,
    )
}

/// Viability-tracking Euler scheme.
///
/// Per step: project the state onto the constraint set, search a feasible
/// tangent witness there, pull it back along an optimal plan, and shift the
/// state through the composed velocity field for one step. Fails with
/// [`Error::ViabilityViolated`] when no witness clears the threshold.
pub fn solve_viable(
    m0: &AtomicMeasure,
    sys: &ControlSystem,
    k: &SetOracle,
    cfg: &SolveConfig,
) -> Result<SolveResult> {
    let dt = cfg.validate()?;
    let resolution = k.resolution();
    if dt * sys.bound_r() > 0.5 * resolution + 1e-15 {
        return Err(Error::InvalidConfig(format!(
            "step length {dt} moves mass up to {}, more than half the oracle resolution {resolution}; refine the grid or coarsen the oracle",
            dt * sys.bound_r()
        )));
    }
    let (d0, _) = k.project(m0)?;
    if d0 > resolution + 1e-12 {
        return Err(Error::InvalidConfig(format!(
            "initial measure lies {d0} from the constraint set (resolution {resolution})"
        )));
    }

    let grid: Vec<f64> = (0..=cfg.steps).map(|j| j as f64 * dt).collect();
    let mut particles = particles_from(m0);
    let mut diagnostics = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let mu = measure_of(&particles)?;
        let (dist_k, nu) = k.project(&mu)?;
        let params = ViabilityCheckParams {
            tau0: dt,
            levels: cfg.witness_levels.max(3),
            threshold: cfg.witness_threshold,
            restarts: cfg.witness_restarts,
            seed: cfg.seed,
        };
        let check = viability_condition_check(&nu, k, sys, &params)?;
        if !check.found {
            return Err(Error::ViabilityViolated {
                step,
                measure: nu,
                score: check.score,
            });
        }
        let (w1_mu_nu, plan) = wasserstein1(&mu, &nu)?;
        let composed = compose(&plan, &check.witness)?;
        let feas = feasibility_residual(&composed, sys)?;

        let mut next: Vec<Particle> = Vec::with_capacity(particles.len());
        for p in &particles {
            let idx = mu.find_atom(&p.position()).ok_or_else(|| {
                Error::InvalidMeasure("particle position missing from state".into())
            })?;
            let fiber = &composed.fibers()[idx];
            for (v, fw) in fiber {
                next.push(p.advance(v, dt, p.weight * fw));
            }
        }
        let merge_error = cap_particles(&mut next, cfg.max_trajectories)?;
        particles = next;

        diagnostics.push(StepDiagnostics {
            time: grid[step],
            dist_to_k: Some(dist_k),
            witness_score: Some(check.score),
            w1_mu_nu: Some(w1_mu_nu),
            feasibility_residual: Some(feas),
            aumann_residual: None,
            merge_error,
        });
    }
    let final_measure = measure_of(&particles)?;
    let (final_dist, _) = k.project(&final_measure)?;
    finish(
        SolveMode::ViableTracking,
        grid,
        particles,
        diagnostics,
        Some(final_dist),
    )
}

/// Merge lowest-weight particles into their nearest neighbors until the cap
/// holds; returns the mass-weighted position error introduced.
fn cap_particles(particles: &mut Vec<Particle>, cap: usize) -> Result<f64> {
    let mut error = 0.0;
    while particles.len() > cap {
        let victim = particles
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.weight.total_cmp(&b.1.weight))
            .map(|(i, _)| i)
            .unwrap();
        let vp = particles[victim].position();
        let mut nearest = usize::MAX;
        let mut best = f64::INFINITY;
        for (i, p) in particles.iter().enumerate() {
            if i == victim {
                continue;
            }
            let d = torus_distance(&p.position(), &vp)?;
            if d < best {
                best = d;
                nearest = i;
            }
        }
        let w = particles[victim].weight;
        error += w * best;
        particles[nearest].weight += w;
        particles.remove(victim);
    }
    Ok(error)
}

/// Integrated distance of realized displacements to the step-level reachable
/// sets along the run, over the grid window `[s, r]`.
///
/// Windows of up to [`MAX_AUMANN_PIECES`] steps are scored separately and
/// summed, which upper-bounds the single-window value.
pub fn solution_residual(result: &SolveResult, sys: &ControlSystem, s: f64, r: f64) -> Result<f64> {
    let grid = result.grid();
    let a = grid_index(grid, s)?;
    let b = grid_index(grid, r)?;
    if a >= b {
        return Err(Error::InvalidConfig("need s < r".into()));
    }

    let mut total = 0.0;
    for (traj, &w) in result
        .bundle
        .trajectories()
        .iter()
        .zip(result.bundle.weights())
    {
        let nodes = traj.node_points();
        let mut acc = 0.0;
        let mut lo = a;
        while lo < b {
            let hi = (lo + MAX_AUMANN_PIECES).min(b);
            let mut pieces = Vec::with_capacity(hi - lo);
            for k in lo..hi {
                let verts = vectogram(sys, &nodes[k], &result.flow[k])?;
                pieces.push((grid[k + 1] - grid[k], verts));
            }
            let dx = traj.cover_displacement(grid, grid[lo], grid[hi])?;
            acc += dist_to_step_aumann(&dx, &pieces)?;
            lo = hi;
        }
        total += w * acc;
    }
    Ok(total)
}

fn grid_index(grid: &[f64], t: f64) -> Result<usize> {
    grid.iter()
        .position(|&g| (g - t).abs() <= 1e-9)
        .ok_or(Error::TimeOutOfRange {
            t,
            lo: grid[0],
            hi: *grid.last().unwrap(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_controls(us: &[f64]) -> Vec<Vec<f64>> {
        us.iter().map(|&u| vec![u]).collect()
    }

    #[test]
    fn zero_control_gives_constant_flow() {
        let sys = ControlSystem::constant_controls(scalar_controls(&[0.0])).unwrap();
        let m0 = AtomicMeasure::new(
            vec![TorusPoint::scalar(0.2), TorusPoint::scalar(0.8)],
            vec![0.5, 0.5],
        )
        .unwrap();
        let out = solve_forward(
            &m0,
            &sys,
            &Selector::ControlIndex(0),
            &SolveConfig::new(1.0, 10),
        )
        .unwrap();
        for m in &out.flow {
            assert!(m.same_measure(&m0, 1e-12));
        }
    }

    #[test]
    fn pure_transport_matches_the_translate() {
        let sys = ControlSystem::constant_controls(scalar_controls(&[-1.0, 1.0])).unwrap();
        let m0 = AtomicMeasure::dirac(TorusPoint::scalar(0.0));
        let out = solve_forward(
            &m0,
            &sys,
            &Selector::ControlIndex(1),
            &SolveConfig::new(0.3, 30),
        )
        .unwrap();
        let expected = AtomicMeasure::dirac(TorusPoint::scalar(0.3));
        let w = wasserstein1_cost(out.flow.last().unwrap(), &expected).unwrap();
        assert!(w <= 1e-9, "W1 to the translate: {w}");
        // Interior times track the translate as well.
        let mid = evaluate(&out.bundle, 0.15).unwrap();
        assert!(
            wasserstein1_cost(&mid, &AtomicMeasure::dirac(TorusPoint::scalar(0.15))).unwrap()
                <= 1e-9
        );
    }

    #[test]
    fn infeasible_selector_is_reported_with_location() {
        let sys = ControlSystem::constant_controls(scalar_controls(&[1.0])).unwrap();
        let m0 = AtomicMeasure::dirac(TorusPoint::scalar(0.0));
        let err = solve_forward(
            &m0,
            &sys,
            &Selector::Constant(Velocity::scalar(0.5)),
            &SolveConfig::new(0.1, 2),
        )
        .unwrap_err();
        match err {
            Error::SelectorInfeasible { step, atom, .. } => {
                assert_eq!(step, 0);
                assert_eq!(atom, 0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn mean_drift_contracts_and_respects_mirror_symmetry() {
        let sys = ControlSystem::mean_drift(1.0, scalar_controls(&[0.0]), 1).unwrap();
        let m0 = AtomicMeasure::new(
            vec![TorusPoint::scalar(0.4), TorusPoint::scalar(0.6)],
            vec![0.5, 0.5],
        )
        .unwrap();
        let out = solve_forward(
            &m0,
            &sys,
            &Selector::ControlIndex(0),
            &SolveConfig::new(0.25, 25),
        )
        .unwrap();
        let last = out.flow.last().unwrap();
        let gap =
            |m: &AtomicMeasure| -> f64 { torus_distance(&m.atoms()[0], &m.atoms()[1]).unwrap() };
        assert!(gap(last) < gap(&m0), "atoms should contract");

        let mirrored =
            crate::measures::pushforward(last, |p| TorusPoint::scalar(1.0 - p.coords()[0]))
                .unwrap();
        let w = wasserstein1_cost(last, &mirrored).unwrap();
        assert!(w <= 1e-10, "mirror asymmetry {w}");
    }

    #[test]
    fn viable_tracking_stays_on_the_dirac_pair_family() {
        let sys = ControlSystem::constant_controls(scalar_controls(&[-1.0, 1.0])).unwrap();
        let k = SetOracle::dirac_pair_family(0.5, 0.25, 0.02).unwrap();
        let m0 = AtomicMeasure::dirac(TorusPoint::scalar(0.5));
        let cfg = SolveConfig::new(0.2, 40);
        let out = solve_viable(&m0, &sys, &k, &cfg).unwrap();
        let bound = (0.2 + sys.bound_r()) / 40.0 + k.resolution();
        let max_dist = out.max_dist_to_k().unwrap();
        assert!(max_dist <= bound, "max dist {max_dist} vs bound {bound}");
        assert!(out.max_segment_speed() <= sys.bound_r() + 1e-12);
        assert!(out.flow_lipschitz_excess(sys.bound_r()).unwrap() <= 1e-9);
        assert_eq!(out.bundle.trajectories().len(), 2);
    }

    #[test]
    fn viable_tracking_holds_a_fixed_point_with_stationary_control() {
        let sys = ControlSystem::constant_controls(scalar_controls(&[-1.0, 0.0, 1.0])).unwrap();
        let m0 = AtomicMeasure::dirac(TorusPoint::scalar(0.5));
        let k = SetOracle::finite_set(vec![m0.clone()], 1e-3).unwrap();
        let mut cfg = SolveConfig::new(0.1, 250);
        cfg.witness_levels = 3;
        let out = solve_viable(&m0, &sys, &k, &cfg).unwrap();
        for m in &out.flow {
            assert!(wasserstein1_cost(m, &m0).unwrap() <= 1e-9);
        }
        for d in &out.diagnostics {
            assert!(d.dist_to_k.unwrap() <= 1e-9);
        }
    }

    #[test]
    fn unit_drift_violates_viability_at_step_zero() {
        let sys = ControlSystem::constant_controls(scalar_controls(&[1.0])).unwrap();
        let m0 = AtomicMeasure::dirac(TorusPoint::scalar(0.5));
        let k = SetOracle::finite_set(vec![m0.clone()], 1e-3).unwrap();
        let mut cfg = SolveConfig::new(0.1, 250);
        cfg.witness_levels = 3;
        let err = solve_viable(&m0, &sys, &k, &cfg).unwrap_err();
        match err {
            Error::ViabilityViolated { step, score, .. } => {
                assert_eq!(step, 0);
                assert!((score - 1.0).abs() < 0.1, "score {score}");
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert!(err
            .to_string()
            .contains("viability condition violated at step 0"));
    }

    #[test]
    fn step_gate_requires_resolving_the_oracle() {
        let sys = ControlSystem::constant_controls(scalar_controls(&[-1.0, 1.0])).unwrap();
        let m0 = AtomicMeasure::dirac(TorusPoint::scalar(0.5));
        let k = SetOracle::dirac_pair_family(0.5, 0.25, 1e-6).unwrap();
        let cfg = SolveConfig::new(0.2, 40);
        assert!(matches!(
            solve_viable(&m0, &sys, &k, &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn forward_residual_vanishes_for_vertex_selectors() {
        let sys = ControlSystem::constant_controls(scalar_controls(&[-1.0, 1.0])).unwrap();
        let m0 = AtomicMeasure::dirac(TorusPoint::scalar(0.1));
        let out = solve_forward(
            &m0,
            &sys,
            &Selector::ControlIndex(1),
            &SolveConfig::new(0.4, 16),
        )
        .unwrap();
        let res = solution_residual(&out, &sys, 0.0, 0.4).unwrap();
        assert!(res <= 1e-9, "residual {res}");
        for d in &out.diagnostics {
            assert!(d.aumann_residual.unwrap() <= 1e-12);
        }
    }

    #[test]
    fn flow_equals_bundle_evaluation() {
        let sys = ControlSystem::constant_controls(scalar_controls(&[-1.0, 1.0])).unwrap();
        let k = SetOracle::dirac_pair_family(0.5, 0.25, 0.02).unwrap();
        let m0 = AtomicMeasure::dirac(TorusPoint::scalar(0.5));
        let out = solve_viable(&m0, &sys, &k, &SolveConfig::new(0.2, 20)).unwrap();
        for (j, &t) in out.grid().iter().enumerate() {
            let m = evaluate(&out.bundle, t).unwrap();
            assert!(m.same_measure(&out.flow[j], 1e-10));
        }
    }
}
