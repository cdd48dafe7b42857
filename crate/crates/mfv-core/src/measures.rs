//! Finitely supported probability measures on the torus, exact 1-Wasserstein
//! distances with optimal plans, and pushforwards.
//!
//! Atoms are canonical torus points; coordinates that agree within
//! [`ATOM_MERGE_TOL`] are merged at construction, so supports are always
//! duplicate-free. The Wasserstein solver is exact (a transportation LP, not
//! an entropic approximation) and deterministic; instances are capped at
//! [`MAX_ATOMS_EXACT`] atoms per side.

use serde::{Deserialize, Serialize};

use crate::mincost::solve_transport;
use crate::torus::{torus_distance, TorusPoint};
use crate::{Error, Result};

/// Coordinates closer than this (circle distance, per coordinate) denote the
/// same atom.
pub const ATOM_MERGE_TOL: f64 = 1e-12;

/// Tolerance on the total mass of a measure.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Tolerance on transport-plan marginals.
pub const PLAN_MARGINAL_TOL: f64 = 1e-10;

/// Support cap for the exact transport solver.
pub const MAX_ATOMS_EXACT: usize = 512;

/// A finitely supported probability measure on `T^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AtomicMeasureJson", into = "AtomicMeasureJson")]
pub struct AtomicMeasure {
    atoms: Vec<TorusPoint>,
    weights: Vec<f64>,
}

/// Wire format: `{"d": int, "atoms": [[...]], "weights": [...]}`.
#[derive(Serialize, Deserialize)]
struct AtomicMeasureJson {
    d: usize,
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TryFrom<AtomicMeasureJson> for AtomicMeasure {
    type Error = Error;

    fn try_from(json: AtomicMeasureJson) -> Result<Self> {
        let atoms = json
            .atoms
            .into_iter()
            .map(|coords| {
                if coords.len() != json.d {
                    return Err(Error::DimensionMismatch(json.d, coords.len()));
                }
                TorusPoint::new(coords)
            })
            .collect::<Result<Vec<_>>>()?;
        AtomicMeasure::new(atoms, json.weights)
    }
}

impl From<AtomicMeasure> for AtomicMeasureJson {
    fn from(m: AtomicMeasure) -> Self {
        AtomicMeasureJson {
            d: m.dim(),
            atoms: m.atoms.iter().map(|a| a.coords().to_vec()).collect(),
            weights: m.weights,
        }
    }
}

impl AtomicMeasure {
    /// Build a measure, merging atoms that coincide within [`ATOM_MERGE_TOL`].
    ///
    /// Weights must be positive and sum to one within [`WEIGHT_SUM_TOL`].
    pub fn new(atoms: Vec<TorusPoint>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("empty support".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let d = atoms[0].dim();
        if atoms.iter().any(|a| a.dim() != d) {
            return Err(Error::InvalidMeasure("atoms of mixed dimension".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidMeasure(
                "weights must be positive and finite".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, not 1"
            )));
        }

        let mut merged_atoms: Vec<TorusPoint> = Vec::with_capacity(atoms.len());
        let mut merged_weights: Vec<f64> = Vec::with_capacity(atoms.len());
        for (atom, w) in atoms.into_iter().zip(weights) {
            match merged_atoms
                .iter()
                .position(|a| a.close_to(&atom, ATOM_MERGE_TOL))
            {
                Some(i) => merged_weights[i] += w,
                None => {
                    merged_atoms.push(atom);
                    merged_weights.push(w);
                }
            }
        }
        Ok(Self {
            atoms: merged_atoms,
            weights: merged_weights,
        })
    }

    /// A unit mass at one point.
    pub fn dirac(p: TorusPoint) -> Self {
        Self {
            atoms: vec![p],
            weights: vec![1.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].dim()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn atoms(&self) -> &[TorusPoint] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index of the atom coinciding with `p` within [`ATOM_MERGE_TOL`].
    pub fn find_atom(&self, p: &TorusPoint) -> Option<usize> {
        self.atoms
            .iter()
            .position(|a| a.close_to(p, ATOM_MERGE_TOL))
    }

    /// Support-wise equality: same atoms (within `tol`) carrying the same
    /// weights (within `tol`), in any order.
    pub fn same_measure(&self, other: &AtomicMeasure, tol: f64) -> bool {
        if self.dim() != other.dim() || self.len() != other.len() {
            return false;
        }
        self.atoms.iter().zip(&self.weights).all(|(a, &w)| {
            other
                .atoms
                .iter()
                .position(|b| b.close_to(a, tol))
                .map(|j| (other.weights[j] - w).abs() <= tol)
                .unwrap_or(false)
        })
    }

    /// Mean of a scalar observable over the measure.
    pub fn expect(&self, f: impl Fn(&TorusPoint) -> f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, &w)| w * f(a))
            .sum()
    }

    /// Lexicographic key used to orient symmetric computations.
    fn lex_less(&self, other: &AtomicMeasure) -> bool {
        let flat = |m: &AtomicMeasure| -> Vec<f64> {
            let mut v: Vec<f64> = m.atoms.iter().flat_map(|a| a.coords().to_vec()).collect();
            v.extend_from_slice(&m.weights);
            v
        };
        let a = flat(self);
        let b = flat(other);
        for (x, y) in a.iter().zip(&b) {
            match x.total_cmp(y) {
                std::cmp::Ordering::Less => return true,
                std::cmp::Ordering::Greater => return false,
                std::cmp::Ordering::Equal => {}
            }
        }
        a.len() < b.len()
    }
}

/// A coupling between two atomic measures.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    source: AtomicMeasure,
    target: AtomicMeasure,
    /// Mass matrix indexed `[source atom][target atom]`.
    mass: Vec<Vec<f64>>,
}

impl TransportPlan {
    /// Validate marginals against [`PLAN_MARGINAL_TOL`] and wrap.
    pub fn new(source: AtomicMeasure, target: AtomicMeasure, mass: Vec<Vec<f64>>) -> Result<Self> {
        if mass.len() != source.len() || mass.iter().any(|r| r.len() != target.len()) {
            return Err(Error::InvalidPlan("mass matrix shape mismatch".into()));
        }
        if mass.iter().flatten().any(|&x| !x.is_finite() || x < -1e-15) {
            return Err(Error::InvalidPlan("negative or non-finite mass".into()));
        }
        for (i, row) in mass.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - source.weights()[i]).abs() > PLAN_MARGINAL_TOL {
                return Err(Error::InvalidPlan(format!(
                    "row {i} sums to {s}, expected {}",
                    source.weights()[i]
                )));
            }
        }
        for j in 0..target.len() {
            let s: f64 = mass.iter().map(|r| r[j]).sum();
            if (s - target.weights()[j]).abs() > PLAN_MARGINAL_TOL {
                return Err(Error::InvalidPlan(format!(
                    "column {j} sums to {s}, expected {}",
                    target.weights()[j]
                )));
            }
        }
        Ok(Self {
            source,
            target,
            mass,
        })
    }

    /// The diagonal plan from a measure to itself.
    pub fn identity(m: &AtomicMeasure) -> Self {
        let n = m.len();
        let mut mass = vec![vec![0.0; n]; n];
        for (i, &w) in m.weights().iter().enumerate() {
            mass[i][i] = w;
        }
        Self {
            source: m.clone(),
            target: m.clone(),
            mass,
        }
    }

    pub fn source(&self) -> &AtomicMeasure {
        &self.source
    }

    pub fn target(&self) -> &AtomicMeasure {
        &self.target
    }

    pub fn mass(&self) -> &[Vec<f64>] {
        &self.mass
    }

    /// Transport cost of this plan under the torus metric.
    pub fn cost(&self) -> Result<f64> {
        let mut total = 0.0;
        for (i, row) in self.mass.iter().enumerate() {
            for (j, &f) in row.iter().enumerate() {
                if f > 0.0 {
                    total += f * torus_distance(&self.source.atoms[i], &self.target.atoms[j])?;
                }
            }
        }
        Ok(total)
    }

    /// Swap source and target, transposing the mass matrix.
    pub fn transposed(&self) -> TransportPlan {
        let mut mass = vec![vec![0.0; self.source.len()]; self.target.len()];
        for (i, row) in self.mass.iter().enumerate() {
            for (j, &f) in row.iter().enumerate() {
                mass[j][i] = f;
            }
        }
        TransportPlan {
            source: self.target.clone(),
            target: self.source.clone(),
            mass,
        }
    }
}

/// Exact 1-Wasserstein distance together with a minimizing plan.
///
/// The instance is oriented canonically before solving, so the value is
/// bit-identical under argument swap. Supports above [`MAX_ATOMS_EXACT`]
/// atoms per side are rejected.
pub fn wasserstein1(m1: &AtomicMeasure, m2: &AtomicMeasure) -> Result<(f64, TransportPlan)> {
    if m1.dim() != m2.dim() {
        return Err(Error::DimensionMismatch(m1.dim(), m2.dim()));
    }
    if m1.len() > MAX_ATOMS_EXACT || m2.len() > MAX_ATOMS_EXACT {
        return Err(Error::InstanceTooLarge);
    }
    if m2.lex_less(m1) {
        let (value, plan) = oriented_w1(m2, m1)?;
        return Ok((value, plan.transposed()));
    }
    oriented_w1(m1, m2)
}

fn oriented_w1(m1: &AtomicMeasure, m2: &AtomicMeasure) -> Result<(f64, TransportPlan)> {
    let cost: Vec<Vec<f64>> = m1
        .atoms()
        .iter()
        .map(|a| {
            m2.atoms()
                .iter()
                .map(|b| torus_distance(a, b))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let sol = solve_transport(m1.weights(), m2.weights(), &cost)?;
    let plan = TransportPlan::new(m1.clone(), m2.clone(), sol.flow)?;
    Ok((sol.cost, plan))
}

/// Plan-free variant of [`wasserstein1`] for hot loops.
pub fn wasserstein1_cost(m1: &AtomicMeasure, m2: &AtomicMeasure) -> Result<f64> {
    if m1.dim() != m2.dim() {
        return Err(Error::DimensionMismatch(m1.dim(), m2.dim()));
    }
    if m1.len() > MAX_ATOMS_EXACT || m2.len() > MAX_ATOMS_EXACT {
        return Err(Error::InstanceTooLarge);
    }
    let (a, b) = if m2.lex_less(m1) { (m2, m1) } else { (m1, m2) };
    let cost: Vec<Vec<f64>> = a
        .atoms()
        .iter()
        .map(|x| {
            b.atoms()
                .iter()
                .map(|y| torus_distance(x, y))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(solve_transport(a.weights(), b.weights(), &cost)?.cost)
}

/// Image measure under a pointwise map; colliding images merge.
pub fn pushforward(
    m: &AtomicMeasure,
    h: impl Fn(&TorusPoint) -> TorusPoint,
) -> Result<AtomicMeasure> {
    AtomicMeasure::new(m.atoms().iter().map(h).collect(), m.weights().to_vec())
}

/// Distance/projection interface for constraint sets of measures.
///
/// Implementations report a distance within `resolution()` of the true
/// infimum over the set they realize, together with a witness attaining it.
pub trait MeasureSetOracle {
    fn resolution(&self) -> f64;

    /// `(distance, witness)` for the best set member the oracle can exhibit.
    fn project(&self, m: &AtomicMeasure) -> Result<(f64, AtomicMeasure)>;
}

/// Distance from `m` to the constraint set behind `k`, with a witness.
pub fn dist_to_measure_set(
    m: &AtomicMeasure,
    k: &dyn MeasureSetOracle,
) -> Result<(f64, AtomicMeasure)> {
    k.project(m)
}
