//! Geometry of the flat torus `T^d = R^d / Z^d`.
//!
//! Points are stored as canonical representatives in the half-open cube
//! `[0,1)^d`, which makes the representation unique and atom hashing stable.
//! The metric is the Euclidean quotient metric: per coordinate the minimal
//! displacement `min(|delta|, 1 - |delta|)`, combined in l2. Tangent vectors
//! are free vectors in `R^d`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Wrap one coordinate to the canonical interval `[0,1)`.
///
/// `rem_euclid` can round to exactly `1.0` for tiny negative inputs, which
/// would break the half-open invariant, so that case is folded back to `0.0`.
fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Circle distance between two canonical coordinates.
fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(1.0 - d)
}

/// Signed minimal displacement from `a` to `b` on the circle, in `(-1/2, 1/2]`.
pub(crate) fn circle_displacement(a: f64, b: f64) -> f64 {
    let mut d = b - a;
    if d > 0.5 {
        d -= 1.0;
    } else if d <= -0.5 {
        d += 1.0;
    }
    d
}

/// A point on the flat torus, canonicalized to `[0,1)^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    /// Canonicalize arbitrary real coordinates onto the torus.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("torus point coordinates"));
        }
        Ok(Self {
            coords: coords.into_iter().map(wrap).collect(),
        })
    }

    /// Convenience constructor for one-dimensional points.
    pub fn scalar(x: f64) -> Self {
        Self::new(vec![x]).expect("finite scalar")
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// True when every coordinate agrees within `tol` in circle distance.
    pub fn close_to(&self, other: &TorusPoint, tol: f64) -> bool {
        self.dim() == other.dim()
            && self
                .coords
                .iter()
                .zip(&other.coords)
                .all(|(&a, &b)| circle_dist(a, b) <= tol)
    }

    /// Signed minimal displacement vector from `self` to `other`.
    pub fn displacement_to(&self, other: &TorusPoint) -> Result<Velocity> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(self.dim(), other.dim()));
        }
        Velocity::new(
            self.coords
                .iter()
                .zip(&other.coords)
                .map(|(&a, &b)| circle_displacement(a, b))
                .collect(),
        )
    }
}

/// A free tangent vector in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Velocity {
    comps: Vec<f64>,
}

impl Velocity {
    pub fn new(comps: Vec<f64>) -> Result<Self> {
        if comps.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("velocity components"));
        }
        Ok(Self { comps })
    }

    pub fn scalar(v: f64) -> Self {
        Self::new(vec![v]).expect("finite scalar")
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            comps: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn comps(&self) -> &[f64] {
        &self.comps
    }

    pub fn norm(&self) -> f64 {
        self.comps.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, a: f64) -> Velocity {
        Velocity {
            comps: self.comps.iter().map(|c| a * c).collect(),
        }
    }

    pub fn add(&self, other: &Velocity) -> Result<Velocity> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(self.dim(), other.dim()));
        }
        Velocity::new(
            self.comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &Velocity) -> Result<Velocity> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(self.dim(), other.dim()));
        }
        Velocity::new(
            self.comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn dist(&self, other: &Velocity) -> f64 {
        self.comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Euclidean quotient distance on the torus.
pub fn torus_distance(a: &TorusPoint, b: &TorusPoint) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(a.coords
        .iter()
        .zip(&b.coords)
        .map(|(&x, &y)| {
            let w = circle_dist(x, y);
            w * w
        })
        .sum::<f64>()
        .sqrt())
}

/// Move `x` along `v` for duration `tau` and canonicalize: `x + tau * v`.
pub fn translate(x: &TorusPoint, v: &Velocity, tau: f64) -> Result<TorusPoint> {
    if x.dim() != v.dim() {
        return Err(Error::DimensionMismatch(x.dim(), v.dim()));
    }
    TorusPoint::new(
        x.coords
            .iter()
            .zip(&v.comps)
            .map(|(&c, &w)| c + tau * w)
            .collect(),
    )
}
