//! Distributions on the tangent bundle `T^d x R^d` with a pinned base
//! marginal, their transport metric, shifts, rescalings, and composition with
//! transport plans.
//!
//! A lifted measure stores, for every base atom, a conditional velocity
//! distribution (its fiber). Couplings between two lifted measures over the
//! same base are forced onto the base diagonal by the marginal constraints,
//! so the metric decomposes fiberwise; the full coupling LP is kept as an
//! independently coded oracle for that decomposition.

use serde::{Deserialize, Serialize};

use crate::measures::{pushforward, AtomicMeasure, TransportPlan};
use crate::mincost::solve_transport;
use crate::simplex::solve_lp;
use crate::torus::{translate, TorusPoint, Velocity};
use crate::{Error, Result};

/// Velocities within this (max coordinate difference) merge inside a fiber.
pub const VELOCITY_MERGE_TOL: f64 = 1e-12;

/// Support cap per side for the joint coupling oracle.
pub const MAX_JOINT_SUPPORT: usize = 64;

/// A finitely supported probability on `T^d x R^d` whose position marginal is
/// a fixed atomic measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LiftedMeasureJson", into = "LiftedMeasureJson")]
pub struct LiftedMeasure {
    base: AtomicMeasure,
    /// `fibers[i]` is the velocity distribution at `base.atoms()[i]`,
    /// weights summing to one.
    fibers: Vec<Vec<(Velocity, f64)>>,
}

#[derive(Serialize, Deserialize)]
struct FiberJson {
    atom: usize,
    velocities: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

/// Wire format: the base measure plus one fiber record per atom index.
#[derive(Serialize, Deserialize)]
struct LiftedMeasureJson {
    base: AtomicMeasure,
    fibers: Vec<FiberJson>,
}

impl TryFrom<LiftedMeasureJson> for LiftedMeasure {
    type Error = Error;

    fn try_from(json: LiftedMeasureJson) -> Result<Self> {
        let n = json.base.len();
        let mut fibers: Vec<Option<Vec<(Velocity, f64)>>> = vec![None; n];
        for f in json.fibers {
            if f.atom >= n {
                return Err(Error::InvalidLifted(format!(
                    "fiber references atom {} of a {}-atom base",
                    f.atom, n
                )));
            }
            if fibers[f.atom].is_some() {
                return Err(Error::InvalidLifted(format!(
                    "duplicate fiber for atom {}",
                    f.atom
                )));
            }
            if f.velocities.len() != f.weights.len() {
                return Err(Error::InvalidLifted("fiber shape mismatch".into()));
            }
            let vels = f
                .velocities
                .into_iter()
                .map(Velocity::new)
                .collect::<Result<Vec<_>>>()?;
            fibers[f.atom] = Some(vels.into_iter().zip(f.weights).collect());
        }
        let fibers = fibers
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                f.ok_or_else(|| Error::InvalidLifted(format!("missing fiber for atom {i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        LiftedMeasure::new(json.base, fibers)
    }
}

impl From<LiftedMeasure> for LiftedMeasureJson {
    fn from(l: LiftedMeasure) -> Self {
        LiftedMeasureJson {
            base: l.base.clone(),
            fibers: l
                .fibers
                .iter()
                .enumerate()
                .map(|(i, f)| FiberJson {
                    atom: i,
                    velocities: f.iter().map(|(v, _)| v.comps().to_vec()).collect(),
                    weights: f.iter().map(|&(_, w)| w).collect(),
                })
                .collect(),
        }
    }
}

impl LiftedMeasure {
    /// Build a lifted measure; fiber weights must be positive and sum to one,
    /// and near-duplicate velocities are merged.
    pub fn new(base: AtomicMeasure, fibers: Vec<Vec<(Velocity, f64)>>) -> Result<Self> {
        if fibers.len() != base.len() {
            return Err(Error::InvalidLifted(format!(
                "{} fibers for {} atoms",
                fibers.len(),
                base.len()
            )));
        }
        let d = base.dim();
        let mut merged = Vec::with_capacity(fibers.len());
        for fiber in fibers {
            if fiber.is_empty() {
                return Err(Error::InvalidLifted("empty fiber".into()));
            }
            let mut acc: Vec<(Velocity, f64)> = Vec::with_capacity(fiber.len());
            let mut total = 0.0;
            for (v, w) in fiber {
                if v.dim() != d {
                    return Err(Error::DimensionMismatch(d, v.dim()));
                }
                if !w.is_finite() || w <= 0.0 {
                    return Err(Error::InvalidLifted(
                        "fiber weights must be positive and finite".into(),
                    ));
                }
                total += w;
                match acc.iter().position(|(u, _)| {
                    u.comps()
                        .iter()
                        .zip(v.comps())
                        .all(|(a, b)| (a - b).abs() <= VELOCITY_MERGE_TOL)
                }) {
                    Some(i) => acc[i].1 += w,
                    None => acc.push((v, w)),
                }
            }
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidLifted(format!(
                    "fiber weights sum to {total}, not 1"
                )));
            }
            merged.push(acc);
        }
        Ok(Self {
            base,
            fibers: merged,
        })
    }

    /// Deterministic lift of a velocity field: one velocity per atom.
    pub fn from_velocity_field(
        base: AtomicMeasure,
        field: impl Fn(&TorusPoint) -> Velocity,
    ) -> Result<Self> {
        let fibers = base.atoms().iter().map(|x| vec![(field(x), 1.0)]).collect();
        Self::new(base, fibers)
    }

    /// The lift with zero velocity everywhere.
    pub fn zero_lift(base: AtomicMeasure) -> Self {
        let d = base.dim();
        let fibers = vec![vec![(Velocity::zero(d), 1.0)]; base.len()];
        Self { base, fibers }
    }

    /// Unit mass at a single position-velocity pair.
    pub fn dirac(x: TorusPoint, v: Velocity) -> Result<Self> {
        Self::new(AtomicMeasure::dirac(x), vec![vec![(v, 1.0)]])
    }

    pub fn base(&self) -> &AtomicMeasure {
        &self.base
    }

    pub fn fibers(&self) -> &[Vec<(Velocity, f64)>] {
        &self.fibers
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// First partial moment `int |v| d beta`.
    pub fn first_moment(&self) -> f64 {
        self.base
            .weights()
            .iter()
            .zip(&self.fibers)
            .map(|(&m, fiber)| m * fiber.iter().map(|(v, w)| w * v.norm()).sum::<f64>())
            .sum()
    }

    /// Largest velocity norm in the support.
    pub fn max_speed(&self) -> f64 {
        self.fibers
            .iter()
            .flatten()
            .fold(0.0f64, |acc, (v, _)| acc.max(v.norm()))
    }

    /// Support-wise equality within `tol` (atoms, fiber velocities, weights).
    pub fn same_lifted(&self, other: &LiftedMeasure, tol: f64) -> bool {
        if !self.base.same_measure(&other.base, tol) {
            return false;
        }
        self.base
            .atoms()
            .iter()
            .zip(&self.fibers)
            .all(|(x, fiber)| {
                let Some(j) = other.base.find_atom(x) else {
                    return false;
                };
                let of = &other.fibers[j];
                fiber.len() == of.len()
                    && fiber.iter().all(|(v, w)| {
                        of.iter()
                            .any(|(u, uw)| v.dist(u) <= tol && (w - uw).abs() <= tol)
                    })
            })
    }

    /// Map each atom of `other`'s base onto this base (same measure required).
    fn align(&self, other: &LiftedMeasure) -> Result<Vec<usize>> {
        if self.base.len() != other.base.len() || self.dim() != other.dim() {
            return Err(Error::BaseMismatch);
        }
        self.base
            .atoms()
            .iter()
            .zip(self.base.weights())
            .map(|(x, &w)| {
                let j = other.base.find_atom(x).ok_or(Error::BaseMismatch)?;
                if (other.base.weights()[j] - w).abs() > 1e-12 {
                    return Err(Error::BaseMismatch);
                }
                Ok(j)
            })
            .collect()
    }
}

fn check_order(p: f64) -> Result<u32> {
    if p == 1.0 {
        Ok(1)
    } else if p == 2.0 {
        Ok(2)
    } else {
        Err(Error::UnsupportedOrder(p))
    }
}

fn fiber_lex_less(a: &[(Velocity, f64)], b: &[(Velocity, f64)]) -> bool {
    let flat = |f: &[(Velocity, f64)]| -> Vec<f64> {
        let mut v: Vec<f64> = f.iter().flat_map(|(u, _)| u.comps().to_vec()).collect();
        v.extend(f.iter().map(|&(_, w)| w));
        v
    };
    let fa = flat(a);
    let fb = flat(b);
    for (x, y) in fa.iter().zip(&fb) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    fa.len() < fb.len()
}

/// `W_p^p` between two fiber distributions plus the optimal conditional
/// coupling (rows indexed by `a`, columns by `b`).
fn fiber_cost(
    a: &[(Velocity, f64)],
    b: &[(Velocity, f64)],
    p: u32,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let swap = fiber_lex_less(b, a);
    let (u, v) = if swap { (b, a) } else { (a, b) };
    let cost: Vec<Vec<f64>> = u
        .iter()
        .map(|(x, _)| {
            v.iter()
                .map(|(y, _)| {
                    let d = x.dist(y);
                    if p == 1 {
                        d
                    } else {
                        d * d
                    }
                })
                .collect()
        })
        .collect();
    let supply: Vec<f64> = u.iter().map(|&(_, w)| w).collect();
    let demand: Vec<f64> = v.iter().map(|&(_, w)| w).collect();
    let sol = solve_transport(&supply, &demand, &cost)?;
    let plan = if swap {
        let mut t = vec![vec![0.0; sol.flow.len()]; sol.flow[0].len()];
        for (i, row) in sol.flow.iter().enumerate() {
            for (j, &f) in row.iter().enumerate() {
                t[j][i] = f;
            }
        }
        t
    } else {
        sol.flow
    };
    Ok((sol.cost, plan))
}

/// Fiberwise coupling between two lifted measures over the same base.
#[derive(Debug, Clone)]
pub struct LiftedPlan {
    base: AtomicMeasure,
    /// Conditional coupling per atom; row/column sums reproduce the two fiber
    /// weight vectors.
    couplings: Vec<Vec<Vec<f64>>>,
}

impl LiftedPlan {
    pub fn base(&self) -> &AtomicMeasure {
        &self.base
    }

    pub fn couplings(&self) -> &[Vec<Vec<f64>>] {
        &self.couplings
    }
}

/// Transport metric between lifted measures sharing a base marginal:
/// `[sum_i m_i W_p^p(fiber_i, fiber'_i)]^{1/p}` for `p` in `{1, 2}`.
pub fn lifted_metric(b1: &LiftedMeasure, b2: &LiftedMeasure, p: f64) -> Result<f64> {
    Ok(lifted_metric_with_plan(b1, b2, p)?.0)
}

/// [`lifted_metric`] along with the per-fiber optimal couplings.
pub fn lifted_metric_with_plan(
    b1: &LiftedMeasure,
    b2: &LiftedMeasure,
    p: f64,
) -> Result<(f64, LiftedPlan)> {
    let order = check_order(p)?;
    let map = b1.align(b2)?;
    let mut acc = 0.0;
    let mut couplings = Vec::with_capacity(b1.base.len());
    for (i, &w) in b1.base.weights().iter().enumerate() {
        let (cost, plan) = fiber_cost(&b1.fibers[i], &b2.fibers[map[i]], order)?;
        acc += w * cost;
        couplings.push(plan);
    }
    let value = if order == 1 { acc } else { acc.sqrt() };
    Ok((
        value,
        LiftedPlan {
            base: b1.base.clone(),
            couplings,
        },
    ))
}

/// Direct solve of the full coupling LP over `T^d x R^d x R^d` with both
/// lifted marginals constrained; an independent check of [`lifted_metric`].
///
/// Total support is capped at [`MAX_JOINT_SUPPORT`] pairs per side.
pub fn lifted_metric_joint_oracle(b1: &LiftedMeasure, b2: &LiftedMeasure, p: f64) -> Result<f64> {
    let order = check_order(p)?;
    let map = b1.align(b2)?;
    let support1: usize = b1.fibers.iter().map(|f| f.len()).sum();
    let support2: usize = b2.fibers.iter().map(|f| f.len()).sum();
    if support1 > MAX_JOINT_SUPPORT || support2 > MAX_JOINT_SUPPORT {
        return Err(Error::InstanceTooLarge);
    }

    // One variable per (atom, v1, v2) triple; marginal rows pin the joint
    // masses m_i * w on both sides.
    let mut costs = Vec::new();
    let mut var_of = Vec::new(); // (atom, j, k) per variable
    for (i, fiber1) in b1.fibers.iter().enumerate() {
        let fiber2 = &b2.fibers[map[i]];
        for (j, (v1, _)) in fiber1.iter().enumerate() {
            for (k, (v2, _)) in fiber2.iter().enumerate() {
                let d = v1.dist(v2);
                costs.push(if order == 1 { d } else { d * d });
                var_of.push((i, j, k));
            }
        }
    }
    let nvars = costs.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for (i, fiber1) in b1.fibers.iter().enumerate() {
        let m_i = b1.base.weights()[i];
        for (j, &(_, w)) in fiber1.iter().enumerate() {
            let mut row = vec![0.0; nvars];
            for (idx, &(ai, aj, _)) in var_of.iter().enumerate() {
                if ai == i && aj == j {
                    row[idx] = 1.0;
                }
            }
            rows.push(row);
            rhs.push(m_i * w);
        }
        let fiber2 = &b2.fibers[map[i]];
        for (k, &(_, w)) in fiber2.iter().enumerate() {
            let mut row = vec![0.0; nvars];
            for (idx, &(ai, _, ak)) in var_of.iter().enumerate() {
                if ai == i && ak == k {
                    row[idx] = 1.0;
                }
            }
            rows.push(row);
            rhs.push(m_i * w);
        }
    }
    let value = solve_lp(&costs, &rows, &rhs)?;
    Ok(if order == 1 {
        value
    } else {
        value.max(0.0).sqrt()
    })
}

/// Push the lifted measure forward through `(x, v) -> x + tau v`.
pub fn shift(beta: &LiftedMeasure, tau: f64) -> Result<AtomicMeasure> {
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for ((x, &m), fiber) in beta
        .base
        .atoms()
        .iter()
        .zip(beta.base.weights())
        .zip(&beta.fibers)
    {
        for (v, w) in fiber {
            atoms.push(translate(x, v, tau)?);
            weights.push(m * w);
        }
    }
    AtomicMeasure::new(atoms, weights)
}

/// Scale every fiber velocity by `a`, leaving the base unchanged.
pub fn rescale(beta: &LiftedMeasure, a: f64) -> LiftedMeasure {
    let fibers = beta
        .fibers
        .iter()
        .map(|fiber| {
            // Rescaling can collide velocities (a = 0), so merge again.
            let mut acc: Vec<(Velocity, f64)> = Vec::with_capacity(fiber.len());
            for (v, w) in fiber {
                let sv = v.scaled(a);
                match acc.iter().position(|(u, _)| {
                    u.comps()
                        .iter()
                        .zip(sv.comps())
                        .all(|(p, q)| (p - q).abs() <= VELOCITY_MERGE_TOL)
                }) {
                    Some(i) => acc[i].1 += w,
                    None => acc.push((sv, *w)),
                }
            }
            acc
        })
        .collect();
    LiftedMeasure {
        base: beta.base.clone(),
        fibers,
    }
}

/// Transport a lifted measure to a new base along a plan: the fiber at a
/// source atom mixes the fibers of `beta` with the plan's conditional
/// weights. Realizes the composition `plan * beta` over `plan.source()`.
pub fn compose(plan: &TransportPlan, beta: &LiftedMeasure) -> Result<LiftedMeasure> {
    let target = plan.target();
    if target.len() != beta.base.len() || target.dim() != beta.dim() {
        return Err(Error::BaseMismatch);
    }
    let map: Vec<usize> = target
        .atoms()
        .iter()
        .map(|x| beta.base.find_atom(x).ok_or(Error::BaseMismatch))
        .collect::<Result<Vec<_>>>()?;

    let source = plan.source();
    let mut fibers = Vec::with_capacity(source.len());
    for (i, &m_i) in source.weights().iter().enumerate() {
        let mut fiber: Vec<(Velocity, f64)> = Vec::new();
        for (j, &mass) in plan.mass()[i].iter().enumerate() {
            if mass <= 0.0 {
                continue;
            }
            let frac = mass / m_i;
            for (v, w) in &beta.fibers[map[j]] {
                let piece = frac * w;
                match fiber.iter().position(|(u, _)| {
                    u.comps()
                        .iter()
                        .zip(v.comps())
                        .all(|(p, q)| (p - q).abs() <= VELOCITY_MERGE_TOL)
                }) {
                    Some(k) => fiber[k].1 += piece,
                    None => fiber.push((v.clone(), piece)),
                }
            }
        }
        if fiber.is_empty() {
            return Err(Error::InvalidPlan(format!(
                "source atom {i} carries no mass"
            )));
        }
        // Conditional weights: renormalize away the plan's marginal slack.
        let total: f64 = fiber.iter().map(|&(_, w)| w).sum();
        for entry in fiber.iter_mut() {
            entry.1 /= total;
        }
        fibers.push(fiber);
    }
    Ok(LiftedMeasure {
        base: source.clone(),
        fibers,
    })
}

/// Composition of two transport plans over their shared middle marginal.
pub fn compose_plans(p12: &TransportPlan, p23: &TransportPlan) -> Result<TransportPlan> {
    let mid = p12.target();
    if mid.len() != p23.source().len() || mid.dim() != p23.source().dim() {
        return Err(Error::InvalidPlan("middle marginals do not match".into()));
    }
    let map: Vec<usize> = mid
        .atoms()
        .iter()
        .map(|x| {
            p23.source()
                .find_atom(x)
                .ok_or_else(|| Error::InvalidPlan("middle marginals do not match".into()))
        })
        .collect::<Result<Vec<_>>>()?;

    let n1 = p12.source().len();
    let n3 = p23.target().len();
    let mut mass = vec![vec![0.0; n3]; n1];
    for i in 0..n1 {
        for (j, &m12) in p12.mass()[i].iter().enumerate() {
            if m12 <= 0.0 {
                continue;
            }
            let jj = map[j];
            let w_mid = p23.source().weights()[jj];
            for (k, &m23) in p23.mass()[jj].iter().enumerate() {
                if m23 > 0.0 {
                    mass[i][k] += m12 * m23 / w_mid;
                }
            }
        }
    }
    TransportPlan::new(p12.source().clone(), p23.target().clone(), mass)
}

/// Identity check helper used by tests: `shift(beta, 0) == base`.
pub fn shift_is_base_at_zero(beta: &LiftedMeasure) -> Result<bool> {
    Ok(shift(beta, 0.0)?.same_measure(beta.base(), 1e-12))
}

/// Pushforward of the base through a point map, keeping fibers attached.
///
/// Collision of mapped atoms mixes their fibers with base-weight proportions.
pub fn map_base(
    beta: &LiftedMeasure,
    h: impl Fn(&TorusPoint) -> TorusPoint,
) -> Result<LiftedMeasure> {
    let new_base = pushforward(beta.base(), &h)?;
    let mut fibers: Vec<Vec<(Velocity, f64)>> = vec![Vec::new(); new_base.len()];
    let mut mass: Vec<f64> = vec![0.0; new_base.len()];
    for ((x, &m), fiber) in beta
        .base
        .atoms()
        .iter()
        .zip(beta.base.weights())
        .zip(&beta.fibers)
    {
        let image = h(x);
        let idx = new_base
            .find_atom(&image)
            .ok_or_else(|| Error::InvalidMeasure("pushforward image missing".into()))?;
        mass[idx] += m;
        for (v, w) in fiber {
            fibers[idx].push((v.clone(), m * w));
        }
    }
    let fibers = fibers
        .into_iter()
        .zip(&mass)
        .map(|(f, &m)| f.into_iter().map(|(v, w)| (v, w / m)).collect())
        .collect();
    LiftedMeasure::new(new_base, fibers)
}
