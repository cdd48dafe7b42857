//! Constraint-set oracles, the finite-ladder tangency estimator, and the
//! pointwise viability condition check.
//!
//! A limit statement ("the rescaled distance to the set vanishes along some
//! sequence of step sizes") is replaced by a falsifiable finite surrogate: a
//! geometric ladder of step sizes with a monotonicity-plus-threshold verdict,
//! `inconclusive` kept as an honest third outcome. The condition check
//! searches the feasible tangent candidates (per-fiber convex data over
//! vectogram vertices) by seeded coordinate descent.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{vectogram, ControlSystem, VectogramVertices};
use crate::lifted::{shift, LiftedMeasure};
use crate::measures::{pushforward, wasserstein1_cost, AtomicMeasure, MeasureSetOracle};
use crate::torus::{translate, TorusPoint, Velocity};
use crate::{Error, Result};

/// Default verdict threshold on the final tangency ratio.
pub const DEFAULT_TANGENCY_THRESHOLD: f64 = 1e-3;

/// Constraint sets of measures realizable at desk scale.
#[derive(Debug, Clone)]
pub enum SetOracle {
    /// An explicit finite collection of measures.
    FiniteSet {
        members: Vec<AtomicMeasure>,
        resolution: f64,
    },
    /// Translates of a base measure along a fixed direction,
    /// `t -> (x -> x + t dir)# base` for `t` in `[t_lo, t_hi]`.
    ParametricCurve {
        base: AtomicMeasure,
        direction: Velocity,
        t_lo: f64,
        t_hi: f64,
        resolution: f64,
    },
    /// The symmetric pair family `(delta_{c-t} + delta_{c+t}) / 2`,
    /// `t` in `[0, epsilon]`, on the one-dimensional torus.
    DiracPairFamily {
        center: f64,
        epsilon: f64,
        resolution: f64,
    },
}

impl SetOracle {
    pub fn finite_set(members: Vec<AtomicMeasure>, resolution: f64) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidConfig("empty constraint set".into()));
        }
        let d = members[0].dim();
        if members.iter().any(|m| m.dim() != d) {
            return Err(Error::InvalidConfig("members of mixed dimension".into()));
        }
        check_resolution(resolution)?;
        Ok(SetOracle::FiniteSet {
            members,
            resolution,
        })
    }

    pub fn parametric_curve(
        base: AtomicMeasure,
        direction: Velocity,
        t_lo: f64,
        t_hi: f64,
        resolution: f64,
    ) -> Result<Self> {
        if direction.dim() != base.dim() {
            return Err(Error::DimensionMismatch(base.dim(), direction.dim()));
        }
        if !(t_hi >= t_lo) {
            return Err(Error::InvalidConfig("empty parameter range".into()));
        }
        check_resolution(resolution)?;
        Ok(SetOracle::ParametricCurve {
            base,
            direction,
            t_lo,
            t_hi,
            resolution,
        })
    }

    pub fn dirac_pair_family(center: f64, epsilon: f64, resolution: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidConfig("epsilon must be nonnegative".into()));
        }
        check_resolution(resolution)?;
        Ok(SetOracle::DiracPairFamily {
            center,
            epsilon,
            resolution,
        })
    }

    /// Ambient dimension of the set members.
    pub fn dim(&self) -> usize {
        match self {
            SetOracle::FiniteSet { members, .. } => members[0].dim(),
            SetOracle::ParametricCurve { base, .. } => base.dim(),
            SetOracle::DiracPairFamily { .. } => 1,
        }
    }

    /// Curve sample at parameter `t` (curve kinds only).
    fn sample(&self, t: f64) -> Result<AtomicMeasure> {
        match self {
            SetOracle::FiniteSet { .. } => Err(Error::Oracle("finite set has no parameter".into())),
            SetOracle::ParametricCurve {
                base, direction, ..
            } => pushforward(base, |x| {
                translate(x, direction, t).expect("matching dimensions")
            }),
            SetOracle::DiracPairFamily { center, .. } => {
                let lo = TorusPoint::scalar(center - t);
                let hi = TorusPoint::scalar(center + t);
                if t == 0.0 {
                    Ok(AtomicMeasure::dirac(lo))
                } else {
                    AtomicMeasure::new(vec![lo, hi], vec![0.5, 0.5])
                }
            }
        }
    }

    /// Parameter range and the curve's Lipschitz modulus in Wasserstein
    /// distance per unit parameter (curve kinds only).
    fn curve_range(&self) -> Option<(f64, f64, f64)> {
        match self {
            SetOracle::FiniteSet { .. } => None,
            SetOracle::ParametricCurve {
                direction,
                t_lo,
                t_hi,
                ..
            } => Some((*t_lo, *t_hi, direction.norm().max(1e-9))),
            SetOracle::DiracPairFamily { epsilon, .. } => Some((0.0, *epsilon, 1.0)),
        }
    }
}

fn check_resolution(resolution: f64) -> Result<()> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(Error::InvalidConfig("resolution must be positive".into()));
    }
    Ok(())
}

impl MeasureSetOracle for SetOracle {
    fn resolution(&self) -> f64 {
        match self {
            SetOracle::FiniteSet { resolution, .. }
            | SetOracle::ParametricCurve { resolution, .. }
            | SetOracle::DiracPairFamily { resolution, .. } => *resolution,
        }
    }

    fn project(&self, m: &AtomicMeasure) -> Result<(f64, AtomicMeasure)> {
        if m.dim() != self.dim() {
            return Err(Error::DimensionMismatch(self.dim(), m.dim()));
        }
        match self {
            SetOracle::FiniteSet { members, .. } => {
                let mut best = f64::INFINITY;
                let mut witness = 0usize;
                for (k, member) in members.iter().enumerate() {
                    let d = wasserstein1_cost(m, member)?;
                    if d < best {
                        best = d;
                        witness = k;
                    }
                }
                Ok((best, members[witness].clone()))
            }
            _ => {
                let (t_lo, t_hi, modulus) = self.curve_range().unwrap();
                let span = t_hi - t_lo;
                let eval = |t: f64| -> Result<f64> { wasserstein1_cost(m, &self.sample(t)?) };
                if span == 0.0 {
                    let d = eval(t_lo)?;
                    return Ok((d, self.sample(t_lo)?));
                }
                // Coarse scan at the declared resolution, then local golden
                // refinement of the best bracket.
                let step = (self.resolution() / modulus).min(span);
                let cells = ((span / step).ceil() as usize).clamp(1, 200_000);
                let mut best_k = 0usize;
                let mut best_d = f64::INFINITY;
                for k in 0..=cells {
                    let t = t_lo + span * (k as f64) / (cells as f64);
                    let d = eval(t)?;
                    if d < best_d {
                        best_d = d;
                        best_k = k;
                    }
                }
                let lo = t_lo + span * (best_k.saturating_sub(1) as f64) / (cells as f64);
                let hi = t_lo + span * ((best_k + 1).min(cells) as f64) / (cells as f64);
                let (t_star, d_star) = golden_min(lo, hi, &eval)?;
                let (t_best, d_best) = if d_star < best_d {
                    (t_star, d_star)
                } else {
                    (t_lo + span * (best_k as f64) / (cells as f64), best_d)
                };
                Ok((d_best, self.sample(t_best)?))
            }
        }
    }
}

/// Golden-section minimization on `[lo, hi]`; deterministic.
fn golden_min(lo: f64, hi: f64, f: &impl Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut a = lo;
    let mut b = hi;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    let t = 0.5 * (a + b);
    Ok((t, f(t)?))
}

/// Outcome of a tangency ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TangencyVerdict {
    Tangent,
    NotTangent,
    Inconclusive,
}

/// Ratios `dist(shift(beta, tau), K) / tau` along a geometric ladder of step
/// sizes, with the resulting verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TangencyReport {
    pub taus: Vec<f64>,
    pub ratios: Vec<f64>,
    pub verdict: TangencyVerdict,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diagnostic: Option<String>,
}

impl TangencyReport {
    pub fn final_ratio(&self) -> f64 {
        *self.ratios.last().unwrap()
    }
}

/// Tangency ladder with the default threshold.
pub fn tangency_estimate(
    beta: &LiftedMeasure,
    k: &dyn MeasureSetOracle,
    tau0: f64,
    levels: usize,
) -> Result<TangencyReport> {
    tangency_estimate_with_threshold(beta, k, tau0, levels, DEFAULT_TANGENCY_THRESHOLD)
}

/// Evaluate `dist(shift(beta, tau_j), K) / tau_j` at `tau_j = tau0 * 2^-j`.
///
/// Verdict `tangent` requires the final ratio below the threshold and
/// non-increasing ratios over the last three rungs; a sub-threshold final
/// ratio without that monotonicity stays `inconclusive`, as does a ladder
/// that descends below the oracle's resolution.
pub fn tangency_estimate_with_threshold(
    beta: &LiftedMeasure,
    k: &dyn MeasureSetOracle,
    tau0: f64,
    levels: usize,
    threshold: f64,
) -> Result<TangencyReport> {
    if !(tau0 > 0.0) || !tau0.is_finite() {
        return Err(Error::InvalidConfig("tau0 must be positive".into()));
    }
    if levels < 3 {
        return Err(Error::InvalidConfig(
            "tangency ladder needs at least 3 levels".into(),
        ));
    }
    let taus: Vec<f64> = (0..levels).map(|j| tau0 * 0.5f64.powi(j as i32)).collect();
    let mut ratios = Vec::with_capacity(levels);
    for &tau in &taus {
        let shifted = shift(beta, tau)?;
        let (dist, _) = k.project(&shifted)?;
        ratios.push(dist / tau);
    }

    let tau_min = *taus.last().unwrap();
    let mut diagnostic = None;
    let verdict = if k.resolution() > tau_min {
        diagnostic = Some(format!(
            "oracle resolution {} is coarser than the smallest step {tau_min}; ratios are not trustworthy at that scale",
            k.resolution()
        ));
        TangencyVerdict::Inconclusive
    } else {
        let last = ratios[levels - 1];
        let tail_monotone =
            ratios[levels - 3] >= ratios[levels - 2] - 1e-12 && ratios[levels - 2] >= last - 1e-12;
        if last < threshold && tail_monotone {
            TangencyVerdict::Tangent
        } else if last >= threshold {
            TangencyVerdict::NotTangent
        } else {
            diagnostic =
                Some("final ratio is below the threshold but the tail is not monotone".into());
            TangencyVerdict::Inconclusive
        }
    };
    Ok(TangencyReport {
        taus,
        ratios,
        verdict,
        threshold,
        diagnostic,
    })
}

/// Search parameters for [`viability_condition_check`].
#[derive(Debug, Clone)]
pub struct ViabilityCheckParams {
    /// Top of the tangency ladder.
    pub tau0: f64,
    /// Ladder length (at least 3).
    pub levels: usize,
    /// Verdict threshold on the final ratio.
    pub threshold: f64,
    /// Coordinate-descent restarts.
    pub restarts: usize,
    /// Seed for the randomized restarts.
    pub seed: u64,
}

impl ViabilityCheckParams {
    pub fn new(tau0: f64) -> Self {
        Self {
            tau0,
            levels: 4,
            threshold: DEFAULT_TANGENCY_THRESHOLD,
            restarts: 20,
            seed: 0,
        }
    }
}

/// Result of the condition check at one measure.
#[derive(Debug, Clone)]
pub struct ViabilityWitness {
    /// Whether the best score cleared the threshold.
    pub found: bool,
    /// The best feasible candidate encountered.
    pub witness: LiftedMeasure,
    /// Its final tangency ratio.
    pub score: f64,
    /// Full ladder for the witness.
    pub report: TangencyReport,
}

/// How a fiber realizes its convex data over the vectogram vertices.
#[derive(Clone, Copy, PartialEq)]
enum FiberMode {
    /// The fiber is the mixture `sum_k lambda_k delta_{v_k}`.
    Mixed,
    /// The fiber is the single velocity `sum_k lambda_k v_k`.
    Barycentric,
}

#[derive(Clone)]
struct SearchState {
    weights: Vec<Vec<f64>>,
    modes: Vec<FiberMode>,
}

fn build_candidate(
    m: &AtomicMeasure,
    verts: &[VectogramVertices],
    state: &SearchState,
) -> Result<LiftedMeasure> {
    let mut fibers = Vec::with_capacity(verts.len());
    for (i, vv) in verts.iter().enumerate() {
        let lambda = &state.weights[i];
        match state.modes[i] {
            FiberMode::Mixed => {
                let fiber: Vec<(Velocity, f64)> = vv
                    .vertices()
                    .iter()
                    .zip(lambda)
                    .filter(|&(_, &w)| w > 0.0)
                    .map(|(v, &w)| (v.clone(), w))
                    .collect();
                fibers.push(fiber);
            }
            FiberMode::Barycentric => {
                let mut comps = vec![0.0; vv.dim()];
                for (v, &w) in vv.vertices().iter().zip(lambda) {
                    for (c, &vc) in comps.iter_mut().zip(v.comps()) {
                        *c += w * vc;
                    }
                }
                fibers.push(vec![(Velocity::new(comps)?, 1.0)]);
            }
        }
    }
    LiftedMeasure::new(m.clone(), fibers)
}

/// Check the pointwise viability condition at `m`: search the feasible
/// candidates for one whose tangency ratio at the bottom of the ladder falls
/// below the threshold.
///
/// Fibers range over convex data on the local vectogram vertices, realized
/// either as genuine vertex mixtures or as single barycentric velocities
/// (both occur as optimal witnesses). Every returned candidate is feasible by
/// construction. The search is a seeded coordinate descent over fiber
/// weights with deterministic restarts.
pub fn viability_condition_check(
    m: &AtomicMeasure,
    k: &SetOracle,
    sys: &ControlSystem,
    params: &ViabilityCheckParams,
) -> Result<ViabilityWitness> {
    let (dist_m, _) = k.project(m)?;
    if dist_m > k.resolution() + 1e-12 {
        return Err(Error::InvalidConfig(format!(
            "measure lies {dist_m} from the constraint set, beyond the oracle resolution {}",
            k.resolution()
        )));
    }
    if params.levels < 3 {
        return Err(Error::InvalidConfig(
            "tangency ladder needs at least 3 levels".into(),
        ));
    }
    let tau_min = params.tau0 * 0.5f64.powi(params.levels as i32 - 1);

    let verts: Vec<VectogramVertices> = m
        .atoms()
        .iter()
        .map(|x| vectogram(sys, x, m))
        .collect::<Result<Vec<_>>>()?;
    let sizes: Vec<usize> = verts.iter().map(|v| v.vertices().len()).collect();

    let objective = |state: &SearchState| -> Result<(f64, LiftedMeasure)> {
        let candidate = build_candidate(m, &verts, state)?;
        let shifted = shift(&candidate, tau_min)?;
        let (dist, _) = k.project(&shifted)?;
        Ok((dist / tau_min, candidate))
    };

    let uniform = |mode: FiberMode| SearchState {
        weights: sizes.iter().map(|&s| vec![1.0 / s as f64; s]).collect(),
        modes: vec![mode; sizes.len()],
    };
    let pure = |k: usize, mode: FiberMode| SearchState {
        weights: sizes
            .iter()
            .map(|&s| {
                let mut w = vec![0.0; s];
                w[k.min(s - 1)] = 1.0;
                w
            })
            .collect(),
        modes: vec![mode; sizes.len()],
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut starts: Vec<SearchState> =
        vec![uniform(FiberMode::Mixed), uniform(FiberMode::Barycentric)];
    let max_verts = sizes.iter().copied().max().unwrap();
    for k in 0..max_verts.min(4) {
        starts.push(pure(k, FiberMode::Mixed));
    }
    while starts.len() < params.restarts {
        let mode = if starts.len().is_multiple_of(2) {
            FiberMode::Mixed
        } else {
            FiberMode::Barycentric
        };
        let weights = sizes
            .iter()
            .map(|&s| {
                let raw: Vec<f64> = (0..s).map(|_| rng.gen::<f64>() + 1e-3).collect();
                let total: f64 = raw.iter().sum();
                raw.iter().map(|w| w / total).collect()
            })
            .collect();
        starts.push(SearchState {
            weights,
            modes: vec![mode; sizes.len()],
        });
    }
    starts.truncate(params.restarts.max(1));

    let mut best: Option<(f64, LiftedMeasure)> = None;
    for start in starts {
        let (score, candidate) = descend(start, &objective, &sizes)?;
        if best.as_ref().map(|(b, _)| score < *b).unwrap_or(true) {
            best = Some((score, candidate));
        }
        if best.as_ref().unwrap().0 <= 1e-9 {
            break;
        }
    }
    let (score, witness) = best.unwrap();
    let report = tangency_estimate_with_threshold(
        &witness,
        k,
        params.tau0,
        params.levels,
        params.threshold,
    )?;
    Ok(ViabilityWitness {
        found: score < params.threshold,
        witness,
        score,
        report,
    })
}

/// Coordinate descent over fiber weights: per fiber, pure-vertex moves,
/// golden-section pairwise mass transfers, and a representation toggle.
fn descend(
    mut state: SearchState,
    objective: &impl Fn(&SearchState) -> Result<(f64, LiftedMeasure)>,
    sizes: &[usize],
) -> Result<(f64, LiftedMeasure)> {
    let (mut score, mut candidate) = objective(&state)?;
    for _ in 0..8 {
        let before = score;
        for i in 0..sizes.len() {
            // Pure-vertex moves.
            for k in 0..sizes[i] {
                if state.weights[i][k] == 1.0 {
                    continue;
                }
                let mut trial = state.clone();
                trial.weights[i] = vec![0.0; sizes[i]];
                trial.weights[i][k] = 1.0;
                let (s, c) = objective(&trial)?;
                if s < score - 1e-15 {
                    score = s;
                    candidate = c;
                    state = trial;
                }
            }
            // Pairwise transfers.
            for a in 0..sizes[i] {
                for b in a + 1..sizes[i] {
                    let mu = state.weights[i][a] + state.weights[i][b];
                    if mu <= 0.0 {
                        continue;
                    }
                    let eval_t = |t: f64| -> Result<f64> {
                        let mut trial = state.clone();
                        trial.weights[i][a] = t * mu;
                        trial.weights[i][b] = (1.0 - t) * mu;
                        Ok(objective(&trial)?.0)
                    };
                    let (t_star, s_star) = golden_min(0.0, 1.0, &eval_t)?;
                    // Prefer exact endpoints when they do at least as well.
                    let mut choices = vec![(t_star, s_star)];
                    for t in [0.0, 1.0] {
                        choices.push((t, eval_t(t)?));
                    }
                    let (t_best, s_best) = choices
                        .into_iter()
                        .min_by(|x, y| x.1.total_cmp(&y.1))
                        .unwrap();
                    if s_best < score - 1e-15 {
                        state.weights[i][a] = t_best * mu;
                        state.weights[i][b] = (1.0 - t_best) * mu;
                        let (s, c) = objective(&state)?;
                        score = s;
                        candidate = c;
                    }
                }
            }
            // Representation toggle.
            if sizes[i] > 1 {
                let mut trial = state.clone();
                trial.modes[i] = match state.modes[i] {
                    FiberMode::Mixed => FiberMode::Barycentric,
                    FiberMode::Barycentric => FiberMode::Mixed,
                };
                let (s, c) = objective(&trial)?;
                if s < score - 1e-15 {
                    score = s;
                    candidate = c;
                    state = trial;
                }
            }
        }
        if before - score <= 1e-14 {
            break;
        }
    }

    // Snap tiny weights to zero when that costs nothing: keeps witnesses on
    // minimal supports and avoids spurious particle splitting downstream.
    let mut snapped = state.clone();
    let mut changed = false;
    for w in snapped.weights.iter_mut() {
        let small: f64 = w.iter().filter(|&&x| x < 1e-9).sum();
        if small > 0.0 && small < 1.0 {
            for x in w.iter_mut() {
                if *x < 1e-9 {
                    *x = 0.0;
                    changed = true;
                }
            }
            let total: f64 = w.iter().sum();
            for x in w.iter_mut() {
                *x /= total;
            }
        }
    }
    if changed {
        let (s, c) = objective(&snapped)?;
        if s <= score + 1e-12 {
            return Ok((s, c));
        }
    }
    Ok((score, candidate))
}
