//! Finitely supported measures on spaces of polygonal trajectories.
//!
//! Trajectories are piecewise linear on a shared time grid and store their
//! per-segment displacement vectors in the universal cover, so wraparound is
//! never ambiguous: evaluation canonicalizes, while difference quotients and
//! speed caps read the true displacement. Bundles carry weights summing to
//! one.

use crate::lifted::LiftedMeasure;
use crate::measures::AtomicMeasure;
use crate::mincost::solve_transport;
use crate::torus::{torus_distance, TorusPoint, Velocity};
use crate::{Error, Result};

/// Trajectory caps for the exact bundle metric.
pub const MAX_BUNDLE_TRAJECTORIES: usize = 128;

/// Absolute tolerance when matching user-supplied times to grid nodes.
const TIME_SNAP: f64 = 1e-12;

/// Slack allowed between nominally equal times from different grids.
const TIME_TOL: f64 = 1e-9;

/// A piecewise-linear path on the torus: a start point plus one cover-space
/// displacement per grid segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    start: TorusPoint,
    displacements: Vec<Velocity>,
}

impl Trajectory {
    pub fn new(start: TorusPoint, displacements: Vec<Velocity>) -> Result<Self> {
        let d = start.dim();
        if displacements.iter().any(|v| v.dim() != d) {
            return Err(Error::DimensionMismatch(d, 0));
        }
        Ok(Self {
            start,
            displacements,
        })
    }

    /// Rebuild a trajectory from canonical node points, reading each segment
    /// as the minimal torus displacement. Faithful whenever the true motion
    /// never exceeds half a period per segment, which the solver's speed cap
    /// guarantees.
    pub fn from_nodes(points: &[TorusPoint]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidConfig("empty trajectory".into()));
        }
        let displacements = points
            .windows(2)
            .map(|w| w[0].displacement_to(&w[1]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            start: points[0].clone(),
            displacements,
        })
    }

    pub fn start(&self) -> &TorusPoint {
        &self.start
    }

    pub fn displacements(&self) -> &[Velocity] {
        &self.displacements
    }

    pub fn dim(&self) -> usize {
        self.start.dim()
    }

    /// Node positions in the universal cover, accumulated sequentially.
    pub fn cover_nodes(&self) -> Vec<Vec<f64>> {
        let mut nodes = Vec::with_capacity(self.displacements.len() + 1);
        let mut cur = self.start.coords().to_vec();
        nodes.push(cur.clone());
        for disp in &self.displacements {
            for (c, &d) in cur.iter_mut().zip(disp.comps()) {
                *c += d;
            }
            nodes.push(cur.clone());
        }
        nodes
    }

    /// Canonical node positions on the torus.
    pub fn node_points(&self) -> Vec<TorusPoint> {
        self.cover_nodes()
            .into_iter()
            .map(|c| TorusPoint::new(c).expect("finite cover position"))
            .collect()
    }

    /// Cover position at time `t` relative to `grid`.
    fn cover_at(&self, grid: &[f64], t: f64) -> Result<Vec<f64>> {
        let (j, frac) = locate(grid, t)?;
        let nodes = self.cover_nodes();
        if frac == 0.0 {
            return Ok(nodes[j].clone());
        }
        Ok(nodes[j]
            .iter()
            .zip(self.displacements[j].comps())
            .map(|(&c, &d)| c + frac * d)
            .collect())
    }

    /// Canonical position at time `t` relative to `grid`.
    pub fn point_at(&self, grid: &[f64], t: f64) -> Result<TorusPoint> {
        TorusPoint::new(self.cover_at(grid, t)?)
    }

    /// Cover displacement accumulated between two times.
    pub fn cover_displacement(&self, grid: &[f64], t0: f64, t1: f64) -> Result<Velocity> {
        let a = self.cover_at(grid, t0)?;
        let b = self.cover_at(grid, t1)?;
        Velocity::new(a.iter().zip(&b).map(|(x, y)| y - x).collect())
    }

    /// Re-express the trajectory on a finer or shifted grid over the same
    /// span; exact for piecewise-linear paths.
    pub fn resample(&self, old_grid: &[f64], new_grid: &[f64]) -> Result<Trajectory> {
        let covers: Vec<Vec<f64>> = new_grid
            .iter()
            .map(|&t| self.cover_at(old_grid, t))
            .collect::<Result<Vec<_>>>()?;
        let displacements = covers
            .windows(2)
            .map(|w| Velocity::new(w[0].iter().zip(&w[1]).map(|(a, b)| b - a).collect()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trajectory {
            start: TorusPoint::new(covers[0].clone())?,
            displacements,
        })
    }
}

/// Locate `t` on the grid: segment index plus interpolation fraction, with
/// exact-node snapping.
fn locate(grid: &[f64], t: f64) -> Result<(usize, f64)> {
    let lo = grid[0];
    let hi = *grid.last().unwrap();
    if t < lo - TIME_TOL || t > hi + TIME_TOL {
        return Err(Error::TimeOutOfRange { t, lo, hi });
    }
    for (j, &g) in grid.iter().enumerate() {
        if (t - g).abs() <= TIME_SNAP {
            return Ok((j, 0.0));
        }
    }
    let mut j = 0;
    while j + 1 < grid.len() && grid[j + 1] < t {
        j += 1;
    }
    if j + 1 >= grid.len() {
        // Inside the trailing tolerance window.
        return Ok((grid.len() - 1, 0.0));
    }
    let frac = ((t - grid[j]) / (grid[j + 1] - grid[j])).clamp(0.0, 1.0);
    Ok((j, frac))
}

/// A weighted finite family of trajectories on one grid.
#[derive(Debug, Clone)]
pub struct PathBundle {
    grid: Vec<f64>,
    trajectories: Vec<Trajectory>,
    weights: Vec<f64>,
}

impl PathBundle {
    pub fn new(grid: Vec<f64>, trajectories: Vec<Trajectory>, weights: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "grid must be strictly increasing with at least two nodes".into(),
            ));
        }
        if trajectories.is_empty() || trajectories.len() != weights.len() {
            return Err(Error::InvalidConfig(
                "trajectory and weight counts must match and be nonzero".into(),
            ));
        }
        let segments = grid.len() - 1;
        if trajectories
            .iter()
            .any(|t| t.displacements().len() != segments)
        {
            return Err(Error::InvalidConfig(
                "trajectory segment count does not match the grid".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidConfig("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "bundle weights sum to {total}, not 1"
            )));
        }
        Ok(Self {
            grid,
            trajectories,
            weights,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.trajectories[0].dim()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.grid[0], *self.grid.last().unwrap())
    }

    /// Largest segment speed over the bundle.
    pub fn max_segment_speed(&self) -> f64 {
        let mut top = 0.0f64;
        for traj in &self.trajectories {
            for (k, disp) in traj.displacements().iter().enumerate() {
                let dt = self.grid[k + 1] - self.grid[k];
                top = top.max(disp.norm() / dt);
            }
        }
        top
    }

    /// CSV trace `traj_id,weight,t,x_1..x_d`, one row per trajectory per node.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::from("traj_id,weight,t");
        for c in 1..=d {
            out.push_str(&format!(",x_{c}"));
        }
        out.push('\n');
        for (id, (traj, w)) in self.trajectories.iter().zip(&self.weights).enumerate() {
            for (t, p) in self.grid.iter().zip(traj.node_points()) {
                out.push_str(&format!("{id},{w},{t}"));
                for c in p.coords() {
                    out.push_str(&format!(",{c}"));
                }
                out.push('\n');
            }
        }
        out
    }

    /// Rebuild a bundle from its CSV trace.
    pub fn from_csv(text: &str) -> Result<PathBundle> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidConfig("empty CSV".into()))?;
        let cols = header.split(',').count();
        if cols < 4 || !header.starts_with("traj_id,weight,t") {
            return Err(Error::InvalidConfig("unexpected CSV header".into()));
        }
        let d = cols - 3;
        let mut per_traj: Vec<(f64, Vec<f64>, Vec<TorusPoint>)> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols {
                return Err(Error::InvalidConfig(format!(
                    "row {} has {} fields, expected {cols}",
                    lineno + 2,
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::InvalidConfig(format!("bad number {s:?}")))
            };
            let id = fields[0]
                .parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("bad traj id {:?}", fields[0])))?;
            let w = parse(fields[1])?;
            let t = parse(fields[2])?;
            let coords = fields[3..]
                .iter()
                .map(|s| parse(s))
                .collect::<Result<Vec<f64>>>()?;
            if id == per_traj.len() {
                per_traj.push((w, Vec::new(), Vec::new()));
            } else if id >= per_traj.len() {
                return Err(Error::InvalidConfig("trajectory ids out of order".into()));
            }
            let entry = &mut per_traj[id];
            entry.1.push(t);
            entry.2.push(TorusPoint::new(coords)?);
            if entry.2.last().unwrap().dim() != d {
                return Err(Error::DimensionMismatch(d, entry.2.last().unwrap().dim()));
            }
        }
        if per_traj.is_empty() {
            return Err(Error::InvalidConfig("no trajectories in CSV".into()));
        }
        let grid = per_traj[0].1.clone();
        let mut trajectories = Vec::with_capacity(per_traj.len());
        let mut weights = Vec::with_capacity(per_traj.len());
        for (w, times, points) in &per_traj {
            if times.len() != grid.len()
                || times
                    .iter()
                    .zip(&grid)
                    .any(|(a, b)| (a - b).abs() > TIME_SNAP)
            {
                return Err(Error::InvalidConfig(
                    "trajectories disagree on the time grid".into(),
                ));
            }
            trajectories.push(Trajectory::from_nodes(points)?);
            weights.push(*w);
        }
        PathBundle::new(grid, trajectories, weights)
    }
}

/// Pushforward of the bundle under evaluation at time `t`.
pub fn evaluate(bundle: &PathBundle, t: f64) -> Result<AtomicMeasure> {
    let atoms = bundle
        .trajectories
        .iter()
        .map(|traj| traj.point_at(&bundle.grid, t))
        .collect::<Result<Vec<_>>>()?;
    AtomicMeasure::new(atoms, bundle.weights.clone())
}

/// Conditional splicing of two bundles matched at the junction time.
///
/// Mass of `first` arriving at an endpoint atom is distributed over the
/// `second`-bundle trajectories starting there, proportionally to their
/// conditional weights. Junction positions may disagree by up to the marginal
/// tolerance; the continuation keeps its own displacements, translated to the
/// incoming endpoint.
pub fn concatenate(first: &PathBundle, second: &PathBundle) -> Result<PathBundle> {
    let junction = *first.grid.last().unwrap();
    if (junction - second.grid[0]).abs() > TIME_TOL {
        return Err(Error::InvalidConfig(
            "bundles do not abut at a common junction time".into(),
        ));
    }
    let end_first = evaluate(first, junction)?;
    let start_second = evaluate(second, second.grid[0])?;
    if !end_first.same_measure(&start_second, 1e-10) {
        return Err(Error::JunctionMismatch);
    }

    // Group the continuation trajectories by their start atom.
    let mut groups: Vec<(TorusPoint, Vec<usize>, f64)> = Vec::new();
    for (k, traj) in second.trajectories.iter().enumerate() {
        let p = traj.node_points()[0].clone();
        match groups.iter_mut().find(|(g, _, _)| g.close_to(&p, 1e-10)) {
            Some((_, members, mass)) => {
                members.push(k);
                *mass += second.weights[k];
            }
            None => groups.push((p, vec![k], second.weights[k])),
        }
    }

    let mut grid = first.grid.clone();
    grid.extend_from_slice(&second.grid[1..]);
    let mut trajectories = Vec::new();
    let mut weights = Vec::new();
    for (traj, &w1) in first.trajectories.iter().zip(&first.weights) {
        let end = traj.node_points().pop().unwrap();
        let group = groups
            .iter()
            .find(|(g, _, _)| g.close_to(&end, 1e-9))
            .ok_or(Error::JunctionMismatch)?;
        for &k in &group.1 {
            let mut disps = traj.displacements().to_vec();
            disps.extend_from_slice(second.trajectories[k].displacements());
            trajectories.push(Trajectory::new(traj.start().clone(), disps)?);
            weights.push(w1 * second.weights[k] / group.2);
        }
    }
    PathBundle::new(grid, trajectories, weights)
}

/// Exact 1-Wasserstein distance between bundles with the node-wise uniform
/// torus distance as ground cost.
///
/// Both bundles are resampled onto the union grid first; for piecewise-linear
/// trajectories the supremum over time is attained at grid nodes up to an
/// interpolation error bounded by the segment speeds times the mesh.
pub fn bundle_distance(b1: &PathBundle, b2: &PathBundle) -> Result<f64> {
    let (lo1, hi1) = b1.span();
    let (lo2, hi2) = b2.span();
    if (lo1 - lo2).abs() > TIME_TOL || (hi1 - hi2).abs() > TIME_TOL {
        return Err(Error::InvalidConfig(
            "bundles span different time intervals".into(),
        ));
    }
    if b1.trajectories.len() > MAX_BUNDLE_TRAJECTORIES
        || b2.trajectories.len() > MAX_BUNDLE_TRAJECTORIES
    {
        return Err(Error::InstanceTooLarge);
    }

    let mut union: Vec<f64> = b1.grid.iter().chain(b2.grid.iter()).copied().collect();
    union.sort_by(f64::total_cmp);
    union.dedup_by(|a, b| (*a - *b).abs() <= TIME_SNAP);

    let nodes1: Vec<Vec<TorusPoint>> = b1
        .trajectories
        .iter()
        .map(|t| Ok(t.resample(&b1.grid, &union)?.node_points()))
        .collect::<Result<Vec<_>>>()?;
    let nodes2: Vec<Vec<TorusPoint>> = b2
        .trajectories
        .iter()
        .map(|t| Ok(t.resample(&b2.grid, &union)?.node_points()))
        .collect::<Result<Vec<_>>>()?;

    let mut cost = vec![vec![0.0; nodes2.len()]; nodes1.len()];
    for (i, pi) in nodes1.iter().enumerate() {
        for (j, pj) in nodes2.iter().enumerate() {
            let mut top = 0.0f64;
            for (a, b) in pi.iter().zip(pj) {
                top = top.max(torus_distance(a, b)?);
            }
            cost[i][j] = top;
        }
    }
    Ok(solve_transport(&b1.weights, &b2.weights, &cost)?.cost)
}

/// Pushforward of the bundle under `x(.) -> (x(t0), (x(t0+tau) - x(t0)) / tau)`
/// with the displacement read in the universal cover. The result is a lifted
/// measure over the bundle's initial marginal.
pub fn difference_quotient(bundle: &PathBundle, tau: f64) -> Result<LiftedMeasure> {
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig(
            "difference quotient requires a positive tau".into(),
        ));
    }
    let t0 = bundle.grid[0];
    let t1 = t0 + tau;
    let base = evaluate(bundle, t0)?;
    let mut fibers: Vec<Vec<(Velocity, f64)>> = vec![Vec::new(); base.len()];
    for (traj, &w) in bundle.trajectories.iter().zip(&bundle.weights) {
        let x0 = traj.point_at(&bundle.grid, t0)?;
        let idx = base
            .find_atom(&x0)
            .ok_or_else(|| Error::InvalidMeasure("initial atom not found".into()))?;
        let disp = traj.cover_displacement(&bundle.grid, t0, t1)?;
        fibers[idx].push((disp.scaled(1.0 / tau), w / base.weights()[idx]));
    }
    LiftedMeasure::new(base, fibers)
}
