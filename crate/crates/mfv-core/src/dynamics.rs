//! Controlled vector fields and their vectograms.
//!
//! A [`ControlSystem`] evaluates `f(x, m, u)` over a finite control list; the
//! vectogram at `(x, m)` is the convex hull of those velocities, represented
//! by its generating vertices. Distances to vectograms and to step-level
//! reachable sets (Minkowski sums of scaled vectograms) are computed by an
//! exact active-set projection, so feasibility residuals are trustworthy at
//! tight tolerances.
//!
//! The Lipschitz constant `L` and speed bound `R` are declared by the caller
//! (the field is a black box here) and validated empirically on samples.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::lifted::LiftedMeasure;
use crate::measures::{wasserstein1_cost, AtomicMeasure};
use crate::minnorm::min_norm_point;
use crate::torus::{torus_distance, TorusPoint, Velocity};
use crate::{Error, Result};

/// Projection tolerance for distance-to-hull computations.
pub const PROJECTION_TOL: f64 = 1e-9;

/// Iteration cap for the active-set projection.
pub const PROJECTION_MAX_ITER: usize = 500;

/// Caps for the step-level reachable-set distance.
pub const MAX_AUMANN_PIECES: usize = 8;
pub const MAX_AUMANN_VERTICES: usize = 8;

type CustomField = Arc<dyn Fn(&TorusPoint, &AtomicMeasure, &[f64]) -> Velocity + Send + Sync>;

/// The function family behind `f(x, m, u)`.
#[derive(Clone)]
pub enum FieldKind {
    /// `f(x, m, u) = u`: controls are velocity vectors.
    ConstantControls,
    /// `f(x, m, u) = u + kappa * drift(x, m)` with the coordinatewise drift
    /// `drift_c = int sin(2 pi (y_c - x_c)) m(dy)`.
    MeanDrift { kappa: f64 },
    /// A caller-supplied pure function.
    Custom(CustomField),
}

impl fmt::Debug for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldKind::ConstantControls => write!(f, "ConstantControls"),
            FieldKind::MeanDrift { kappa } => write!(f, "MeanDrift {{ kappa: {kappa} }}"),
            FieldKind::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// A controlled vector field with its finite control list and declared
/// constants.
#[derive(Debug, Clone)]
pub struct ControlSystem {
    kind: FieldKind,
    controls: Vec<Vec<f64>>,
    lipschitz_l: f64,
    bound_r: f64,
}

impl ControlSystem {
    pub fn new(
        kind: FieldKind,
        controls: Vec<Vec<f64>>,
        lipschitz_l: f64,
        bound_r: f64,
    ) -> Result<Self> {
        if controls.is_empty() {
            return Err(Error::InvalidConfig("empty control list".into()));
        }
        if controls.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite control".into()));
        }
        if !(lipschitz_l >= 0.0) || !(bound_r >= 0.0) || !lipschitz_l.is_finite() {
            return Err(Error::InvalidConfig(
                "constants L and R must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            kind,
            controls,
            lipschitz_l,
            bound_r,
        })
    }

    /// `f = u` over velocity-valued controls; `L = 0`, `R = max |u|`.
    pub fn constant_controls(controls: Vec<Vec<f64>>) -> Result<Self> {
        let r = controls
            .iter()
            .map(|u| u.iter().map(|c| c * c).sum::<f64>().sqrt())
            .fold(0.0f64, f64::max);
        Self::new(FieldKind::ConstantControls, controls, 0.0, r)
    }

    /// Mean-field attraction/repulsion drift added to the control.
    ///
    /// `L = 2 pi |kappa| sqrt(d)` dominates both the state and the measure
    /// sensitivity of the sine kernel; `R = max |u| + |kappa| sqrt(d)`.
    pub fn mean_drift(kappa: f64, controls: Vec<Vec<f64>>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("dimension must be positive".into()));
        }
        let u_max = controls
            .iter()
            .map(|u| u.iter().map(|c| c * c).sum::<f64>().sqrt())
            .fold(0.0f64, f64::max);
        let root_d = (dim as f64).sqrt();
        Self::new(
            FieldKind::MeanDrift { kappa },
            controls,
            2.0 * std::f64::consts::PI * kappa.abs() * root_d,
            u_max + kappa.abs() * root_d,
        )
    }

    pub fn controls(&self) -> &[Vec<f64>] {
        &self.controls
    }

    pub fn lipschitz_l(&self) -> f64 {
        self.lipschitz_l
    }

    pub fn bound_r(&self) -> f64 {
        self.bound_r
    }

    /// Evaluate `f(x, m, u)` for the control with the given index.
    pub fn eval(&self, x: &TorusPoint, m: &AtomicMeasure, control: usize) -> Result<Velocity> {
        let u = self
            .controls
            .get(control)
            .ok_or_else(|| Error::InvalidConfig(format!("control index {control} out of range")))?;
        let v = match &self.kind {
            FieldKind::ConstantControls => {
                if u.len() != x.dim() {
                    return Err(Error::DimensionMismatch(x.dim(), u.len()));
                }
                Velocity::new(u.clone())?
            }
            FieldKind::MeanDrift { kappa } => {
                if u.len() != x.dim() {
                    return Err(Error::DimensionMismatch(x.dim(), u.len()));
                }
                let mut comps = u.clone();
                for (c, comp) in comps.iter_mut().enumerate() {
                    let drift: f64 = m
                        .atoms()
                        .iter()
                        .zip(m.weights())
                        .map(|(y, &w)| {
                            w * (2.0 * std::f64::consts::PI * (y.coords()[c] - x.coords()[c])).sin()
                        })
                        .sum();
                    *comp += kappa * drift;
                }
                Velocity::new(comps)?
            }
            FieldKind::Custom(f) => f(x, m, u),
        };
        if v.comps().iter().any(|c| !c.is_finite()) {
            return Err(Error::FieldNonFinite);
        }
        Ok(v)
    }

    /// Sampled validation of the declared constants `L` and `R`.
    ///
    /// Draws random states, measures, and controls; errors if a sampled
    /// velocity exceeds `R` or a sampled difference quotient exceeds `L`.
    pub fn validate_constants(&self, dim: usize, samples: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let random_measure = |rng: &mut ChaCha8Rng| -> Result<AtomicMeasure> {
            let n = rng.gen_range(1..=4usize);
            let atoms = (0..n)
                .map(|_| TorusPoint::new((0..dim).map(|_| rng.gen::<f64>()).collect()))
                .collect::<Result<Vec<_>>>()?;
            let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.1).collect();
            let total: f64 = raw.iter().sum();
            AtomicMeasure::new(atoms, raw.iter().map(|w| w / total).collect())
        };
        for _ in 0..samples {
            let x1 = TorusPoint::new((0..dim).map(|_| rng.gen::<f64>()).collect())?;
            let x2 = TorusPoint::new((0..dim).map(|_| rng.gen::<f64>()).collect())?;
            let m1 = random_measure(&mut rng)?;
            let m2 = random_measure(&mut rng)?;
            let u = rng.gen_range(0..self.controls.len());
            let v1 = self.eval(&x1, &m1, u)?;
            let norm = v1.norm();
            if norm > self.bound_r + 1e-9 {
                return Err(Error::BoundExceeded {
                    norm,
                    bound: self.bound_r,
                });
            }
            let v2 = self.eval(&x2, &m2, u)?;
            let denom = torus_distance(&x1, &x2)? + wasserstein1_cost(&m1, &m2)?;
            if denom > 1e-9 {
                let quotient = v1.dist(&v2) / denom;
                if quotient > self.lipschitz_l + 1e-9 {
                    return Err(Error::InvalidConfig(format!(
                        "sampled Lipschitz quotient {quotient} exceeds declared L = {}",
                        self.lipschitz_l
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The finite vertex set generating `F(x, m)`.
#[derive(Debug, Clone)]
pub struct VectogramVertices {
    vertices: Vec<Velocity>,
}

impl VectogramVertices {
    pub fn new(vertices: Vec<Velocity>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidConfig("empty vertex set".into()));
        }
        let d = vertices[0].dim();
        if vertices.iter().any(|v| v.dim() != d) {
            return Err(Error::DimensionMismatch(d, 0));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Velocity] {
        &self.vertices
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].dim()
    }

    pub fn max_norm(&self) -> f64 {
        self.vertices.iter().fold(0.0f64, |a, v| a.max(v.norm()))
    }
}

/// Evaluate `f` at every control: the generating vertices of `F(x, m)`.
pub fn vectogram(
    sys: &ControlSystem,
    x: &TorusPoint,
    m: &AtomicMeasure,
) -> Result<VectogramVertices> {
    let mut vertices: Vec<Velocity> = Vec::with_capacity(sys.controls().len());
    for k in 0..sys.controls().len() {
        let v = sys.eval(x, m, k)?;
        let norm = v.norm();
        if norm > sys.bound_r() + 1e-9 {
            return Err(Error::BoundExceeded {
                norm,
                bound: sys.bound_r(),
            });
        }
        if !vertices.iter().any(|u| {
            u.comps()
                .iter()
                .zip(v.comps())
                .all(|(a, b)| (a - b).abs() <= 1e-12)
        }) {
            vertices.push(v);
        }
    }
    VectogramVertices::new(vertices)
}

/// Euclidean distance from a velocity to the convex hull of the vertices.
pub fn dist_to_vectogram(v: &Velocity, verts: &VectogramVertices) -> Result<f64> {
    if v.dim() != verts.dim() {
        return Err(Error::DimensionMismatch(v.dim(), verts.dim()));
    }
    let shifted: Vec<Vec<f64>> = verts
        .vertices()
        .iter()
        .map(|w| {
            w.comps()
                .iter()
                .zip(v.comps())
                .map(|(a, b)| a - b)
                .collect()
        })
        .collect();
    Ok(crate::minnorm::dist_to_hull(&shifted, PROJECTION_MAX_ITER))
}

/// Integrated distance of the fiber velocities to the local vectograms:
/// `int dist(v, F(x, m)) d beta` with `m` the base of `beta`. Zero means the
/// lifted measure is feasible for the dynamics.
pub fn feasibility_residual(beta: &LiftedMeasure, sys: &ControlSystem) -> Result<f64> {
    let m = beta.base();
    let mut total = 0.0;
    for ((x, &w), fiber) in m.atoms().iter().zip(m.weights()).zip(beta.fibers()) {
        let verts = vectogram(sys, x, m)?;
        for (v, fw) in fiber {
            total += w * fw * dist_to_vectogram(v, &verts)?;
        }
    }
    Ok(total)
}

/// Distance from a displacement to the reachable set of a piecewise-constant
/// step sequence: the Minkowski sum `sum_i duration_i * co(verts_i)`.
///
/// The linear minimization oracle decomposes over pieces, so the sum is never
/// enumerated; piece and vertex counts stay capped regardless.
pub fn dist_to_step_aumann(dx: &Velocity, pieces: &[(f64, VectogramVertices)]) -> Result<f64> {
    if pieces.is_empty() {
        return Err(Error::InvalidConfig("no pieces".into()));
    }
    if pieces.len() > MAX_AUMANN_PIECES {
        return Err(Error::InstanceTooLarge);
    }
    let d = dx.dim();
    for (dur, verts) in pieces {
        if !(*dur > 0.0) || !dur.is_finite() {
            return Err(Error::InvalidConfig("durations must be positive".into()));
        }
        if verts.vertices().len() > MAX_AUMANN_VERTICES {
            return Err(Error::InstanceTooLarge);
        }
        if verts.dim() != d {
            return Err(Error::DimensionMismatch(d, verts.dim()));
        }
    }

    // Vertex of the shifted sum set minimizing <dir, .>.
    let lmo = |dir: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; d];
        for (dur, verts) in pieces {
            let best = verts
                .vertices()
                .iter()
                .min_by(|a, b| {
                    let da: f64 = a.comps().iter().zip(dir).map(|(x, y)| x * y).sum();
                    let db: f64 = b.comps().iter().zip(dir).map(|(x, y)| x * y).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            for (o, &c) in out.iter_mut().zip(best.comps()) {
                *o += dur * c;
            }
        }
        for (o, &c) in out.iter_mut().zip(dx.comps()) {
            *o -= c;
        }
        out
    };

    let start = lmo(&vec![0.0; d]);
    if start.iter().all(|&c| c == 0.0) {
        return Ok(0.0);
    }
    let x = min_norm_point(start, lmo, PROJECTION_MAX_ITER);
    Ok(x.iter().map(|c| c * c).sum::<f64>().sqrt())
}
