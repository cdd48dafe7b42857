//! JSON experiment configs and their conversion to library types.
//!
//! Every config carries a versioned `schema` field; the structs are echoed
//! verbatim into run manifests so a finished run directory is sufficient to
//! reproduce itself.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use mfv_core::{
    AtomicMeasure, ControlSystem, LiftedMeasure, Selector, SetOracle, SolveConfig, Velocity,
};

pub const CONFIG_SCHEMA: &str = "mfv/1";
pub const RUN_SCHEMA: &str = "mfv-run/1";

pub fn check_schema(schema: &str) -> anyhow::Result<()> {
    if schema != CONFIG_SCHEMA {
        bail!("unsupported config schema {schema:?}; expected {CONFIG_SCHEMA:?}");
    }
    Ok(())
}

/// Built-in controlled vector fields, selectable by name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig {
    /// `constant-controls` (`f = u`) or `mean-drift`
    /// (`f = u + kappa * int sin(2 pi (y - x)) m(dy)` per coordinate).
    pub name: String,
    pub controls: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Override for the declared Lipschitz constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_l: Option<f64>,
    /// Override for the declared speed bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_r: Option<f64>,
}

impl SystemConfig {
    pub fn build(&self, dim: usize) -> anyhow::Result<ControlSystem> {
        let base = match self.name.as_str() {
            "constant-controls" => ControlSystem::constant_controls(self.controls.clone())?,
            "mean-drift" => {
                let kappa = self
                    .kappa
                    .context("mean-drift requires a `kappa` parameter")?;
                ControlSystem::mean_drift(kappa, self.controls.clone(), dim)?
            }
            other => bail!("unknown system {other:?}; built-ins: constant-controls, mean-drift"),
        };
        let sys = match (self.lipschitz_l, self.bound_r) {
            (None, None) => base,
            (l, r) => {
                let kind = match self.name.as_str() {
                    "constant-controls" => mfv_core::dynamics::FieldKind::ConstantControls,
                    _ => mfv_core::dynamics::FieldKind::MeanDrift {
                        kappa: self.kappa.unwrap_or(0.0),
                    },
                };
                ControlSystem::new(
                    kind,
                    self.controls.clone(),
                    l.unwrap_or(base.lipschitz_l()),
                    r.unwrap_or(base.bound_r()),
                )?
            }
        };
        sys.validate_constants(dim, 100, 0)?;
        Ok(sys)
    }
}

/// Constraint-set oracles, selectable by kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OracleConfig {
    FiniteSet {
        members: Vec<AtomicMeasure>,
        resolution: f64,
    },
    ParametricCurve {
        base: AtomicMeasure,
        direction: Vec<f64>,
        t_range: [f64; 2],
        resolution: f64,
    },
    DiracPairFamily {
        center: f64,
        epsilon: f64,
        resolution: f64,
    },
}

impl OracleConfig {
    pub fn build(&self) -> anyhow::Result<SetOracle> {
        Ok(match self {
            OracleConfig::FiniteSet {
                members,
                resolution,
            } => SetOracle::finite_set(members.clone(), *resolution)?,
            OracleConfig::ParametricCurve {
                base,
                direction,
                t_range,
                resolution,
            } => SetOracle::parametric_curve(
                base.clone(),
                Velocity::new(direction.clone())?,
                t_range[0],
                t_range[1],
                *resolution,
            )?,
            OracleConfig::DiracPairFamily {
                center,
                epsilon,
                resolution,
            } => SetOracle::dirac_pair_family(*center, *epsilon, *resolution)?,
        })
    }
}

/// Forward-mode velocity selectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SelectorConfig {
    /// Follow one control of the system.
    ControlIndex { index: usize },
    /// A fixed velocity vector.
    Constant { velocity: Vec<f64> },
}

impl SelectorConfig {
    pub fn build(&self) -> anyhow::Result<Selector> {
        Ok(match self {
            SelectorConfig::ControlIndex { index } => Selector::ControlIndex(*index),
            SelectorConfig::Constant { velocity } => {
                Selector::Constant(Velocity::new(velocity.clone())?)
            }
        })
    }
}

/// Witness-search budget shared by `check` and viable solves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessConfig {
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

impl Default for WitnessConfig {
    fn default() -> Self {
        Self {
            levels: default_levels(),
            threshold: default_threshold(),
            restarts: default_restarts(),
        }
    }
}

fn default_levels() -> usize {
    4
}
fn default_threshold() -> f64 {
    mfv_core::viability::DEFAULT_TANGENCY_THRESHOLD
}
fn default_restarts() -> usize {
    20
}
fn default_max_trajectories() -> usize {
    4096
}

/// `solve` job: system, initial measure, grid, and mode-specific blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveJobConfig {
    pub schema: String,
    #[serde(default)]
    pub seed: u64,
    pub system: SystemConfig,
    pub m0: AtomicMeasure,
    /// `forward-selector` or `viable-tracking`.
    pub mode: String,
    pub horizon: f64,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<OracleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<SelectorConfig>,
    #[serde(default = "default_max_trajectories")]
    pub max_trajectories: usize,
    #[serde(default)]
    pub witness: WitnessConfig,
}

impl SolveJobConfig {
    pub fn solver_config(&self, seed: u64) -> SolveConfig {
        let mut cfg = SolveConfig::new(self.horizon, self.steps);
        cfg.max_trajectories = self.max_trajectories;
        cfg.seed = seed;
        cfg.witness_levels = self.witness.levels;
        cfg.witness_threshold = self.witness.threshold;
        cfg.witness_restarts = self.witness.restarts;
        cfg
    }
}

/// `tangency` job: one lifted measure against one constraint set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TangencyJobConfig {
    pub schema: String,
    #[serde(default)]
    pub seed: u64,
    pub k: OracleConfig,
    pub beta: LiftedMeasure,
    pub tau0: f64,
    pub levels: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

/// `check` job: the pointwise viability condition at one measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckJobConfig {
    pub schema: String,
    #[serde(default)]
    pub seed: u64,
    pub system: SystemConfig,
    pub k: OracleConfig,
    pub m: AtomicMeasure,
    pub tau0: f64,
    #[serde(default)]
    pub witness: WitnessConfig,
}

/// Manifest written next to every run's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub outputs: serde_json::Value,
    pub summary: serde_json::Value,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> anyhow::Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
