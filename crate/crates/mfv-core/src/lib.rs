//! Desk-scale machinery for viability analysis of measure-valued dynamics on
//! the flat torus.
//!
//! The crate works with finitely supported probability measures on
//! `T^d = R^d / Z^d` and provides:
//!
//! - exact 1-Wasserstein distances and optimal transport plans ([`measures`]);
//! - distributions on the tangent bundle `T^d x R^d` with a pinned base
//!   marginal, their fiberwise transport metric, shifts, rescalings, and plan
//!   composition ([`lifted`]);
//! - controlled vector fields, vectograms (convex hulls of admissible
//!   velocities), and distance-to-feasible-set residuals ([`dynamics`]);
//! - weighted bundles of polygonal trajectories with evaluation,
//!   concatenation, and difference quotients ([`paths`]);
//! - constraint-set oracles and a finite-ladder tangency estimator
//!   ([`viability`]);
//! - forward and viability-tracking Euler schemes for the induced
//!   measure-valued dynamics, with inequality certificates as diagnostics
//!   ([`solver`]).
//!
//! All values are immutable after construction and every operation is a pure
//! function, so concurrent use needs no synchronization. Randomized searches
//! take explicit seeds and are bit-reproducible.
//!
//! # Quick start
//!
//! ```
//! use mfv_core::{wasserstein1, AtomicMeasure, TorusPoint};
//!
//! let a = AtomicMeasure::dirac(TorusPoint::scalar(0.1));
//! let b = AtomicMeasure::dirac(TorusPoint::scalar(0.9));
//! let (w, plan) = wasserstein1(&a, &b)?;
//! assert!((w - 0.2).abs() < 1e-12); // the wraparound route is shorter
//! assert!((plan.cost()? - w).abs() < 1e-12);
//! # Ok::<(), mfv_core::Error>(())
//! ```

// `!(x > 0.0)` is the NaN-rejecting form of a positivity guard, and index
// loops over small dense matrices read better than iterator chains here.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod dynamics;
pub mod lifted;
pub mod measures;
mod mincost;
mod minnorm;
pub mod paths;
mod simplex;
pub mod solver;
pub mod torus;
pub mod viability;

pub use dynamics::{
    dist_to_step_aumann, dist_to_vectogram, feasibility_residual, vectogram, ControlSystem,
    VectogramVertices,
};
pub use lifted::{
    compose, compose_plans, lifted_metric, lifted_metric_joint_oracle, lifted_metric_with_plan,
    rescale, shift, LiftedMeasure, LiftedPlan,
};
pub use measures::{
    dist_to_measure_set, pushforward, wasserstein1, wasserstein1_cost, AtomicMeasure,
    MeasureSetOracle, TransportPlan,
};
pub use paths::{
    bundle_distance, concatenate, difference_quotient, evaluate, PathBundle, Trajectory,
};
pub use solver::{
    solution_residual, solve_forward, solve_viable, Selector, SolveConfig, SolveMode, SolveResult,
    StepDiagnostics,
};
pub use torus::{torus_distance, translate, TorusPoint, Velocity};
pub use viability::{
    tangency_estimate, tangency_estimate_with_threshold, viability_condition_check, SetOracle,
    TangencyReport, TangencyVerdict, ViabilityCheckParams, ViabilityWitness,
};

use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid transport plan: {0}")]
    InvalidPlan(String),

    #[error("invalid lifted measure: {0}")]
    InvalidLifted(String),

    /// An exact solver received more support points than its configured cap.
    #[error("instance too large for exact solver")]
    InstanceTooLarge,

    #[error("lifted metric requires identical base marginal")]
    BaseMismatch,

    #[error("unsupported order p = {0}: only p = 1 and p = 2 are available")]
    UnsupportedOrder(f64),

    #[error("concatenation requires matching marginals at the junction")]
    JunctionMismatch,

    #[error("time {t} outside the bundle span [{lo}, {hi}]")]
    TimeOutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("vector field returned a non-finite velocity")]
    FieldNonFinite,

    #[error("velocity norm {norm} exceeds the declared bound {bound}")]
    BoundExceeded { norm: f64, bound: f64 },

    #[error("selector left the vectogram at step {step}, atom {atom} (distance {dist})")]
    SelectorInfeasible { step: usize, atom: usize, dist: f64 },

    #[error("viability condition violated at step {step}")]
    ViabilityViolated {
        step: usize,
        /// The constraint-set point at which no feasible tangent was found.
        measure: AtomicMeasure,
        score: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("oracle failure: {0}")]
    Oracle(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
