//! JSON scenario files. Parsing goes through loosely typed `Raw*` mirrors
//! of the file, then validation builds the core types and reports the path
//! of the first offending field.

use std::path::PathBuf;

use geolqr::dynamics::{RigidBodyState, SimParams};
use geolqr::pmp::{so3_point, AvoidanceScenario, BoundaryMode, Obstacle, Point};
use geolqr::regulators::{RegulationGoal, TrackingReference};
use geolqr::riccati::{AMatrixMode, CostParams};
use geolqr::so3::{InertiaTensor, Rotation};
use nalgebra::{DVector, Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Rotations in the file are rejected, not repaired, beyond this defect.
pub const ROTATION_TOL: f64 = 1e-6;
pub const DEFAULT_H: f64 = 1e-3;
pub const DEFAULT_T_END: f64 = 20.0;
pub const DEFAULT_DECIMATION: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Gains,
    Regulate,
    Track,
    Avoid,
    Check,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Gains => "gains",
            CommandKind::Regulate => "regulate",
            CommandKind::Track => "track",
            CommandKind::Avoid => "avoid",
            CommandKind::Check => "check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainSourceKind {
    /// Constant gains from the algebraic Riccati equation.
    #[default]
    Are,
    /// Time-varying gains from the differential Riccati equation over `[0, t_end]`.
    Dre,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: Option<CommandKind>,
    cost: Option<RawCost>,
    #[serde(default)]
    sim: RawSim,
    inertia: Option<[[f64; 3]; 3]>,
    initial: Option<RawInitial>,
    goal: Option<RawRotation>,
    reference: Option<RawReference>,
    #[serde(default)]
    controller: RawController,
    avoidance: Option<RawAvoidance>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    alpha: f64,
    #[serde(default)]
    gamma: f64,
    q_weights: Option<[[f64; 2]; 2]>,
    a_matrix: Option<String>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    h: Option<f64>,
    t_end: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    rotation: Vec<f64>,
    #[serde(default)]
    omega: [f64; 3],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRotation {
    rotation: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReference {
    omega_ref: Vec<Vec<f64>>,
    rotation: Option<Vec<f64>>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawController {
    #[serde(default)]
    gain_source: GainSourceKind,
    #[serde(default)]
    feedforward_accel_term: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAvoidance {
    #[serde(default)]
    manifold: Manifold,
    dimension: usize,
    q0: Vec<f64>,
    v0: Option<Vec<f64>>,
    target: Vec<f64>,
    #[serde(default)]
    obstacles: Vec<RawObstacle>,
    horizon: f64,
    #[serde(default)]
    mode: RawBoundaryMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Manifold {
    #[default]
    Flat,
    /// Points given as rotation vectors, mapped through the exponential.
    So3,
}

#[derive(Default, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawBoundaryMode {
    #[default]
    Avoidance,
    Regulation,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObstacle {
    center: Vec<f64>,
    radius: f64,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    decimation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub params: CostParams,
    pub a_matrix: Option<AMatrixMode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSpec {
    pub omega_ref: [Vec<f64>; 3],
    pub rotation: Rotation,
}

impl ReferenceSpec {
    pub fn build(&self, h: f64, horizon: f64) -> geolqr::Result<TrackingReference> {
        TrackingReference::new(self.omega_ref.clone(), self.rotation, h, horizon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerSpec {
    pub gain_source: GainSourceKind,
    pub feedforward_accel_term: bool,
}

#[derive(Debug, Clone)]
pub struct AvoidanceSpec {
    pub manifold: Manifold,
    pub scenario: AvoidanceScenario,
    pub mode: BoundaryMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub decimation: usize,
}

/// Fully validated scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub command: Option<CommandKind>,
    pub cost: Option<CostSpec>,
    pub sim: SimParams,
    pub initial: Option<RigidBodyState>,
    pub goal: RegulationGoal,
    pub reference: Option<ReferenceSpec>,
    pub controller: ControllerSpec,
    pub avoidance: Option<AvoidanceSpec>,
    pub output: OutputSpec,
}

fn rotation(field: &str, rows: &[f64]) -> CliResult<Rotation> {
    Rotation::from_row_slice(rows, ROTATION_TOL).map_err(|e| CliError::validation(field, e.to_string()))
}

fn finite(field: &str, x: f64) -> CliResult<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::validation(field, "must be finite"))
    }
}

fn point(field: &str, manifold: Manifold, v: &[f64], n: usize) -> CliResult<Point> {
    if v.len() != n {
        return Err(CliError::validation(field, format!("expected {n} entries, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::validation(field, "must be finite"));
    }
    let v = DVector::from_column_slice(v);
    Ok(match manifold {
        Manifold::Flat => Point::Flat(v),
        Manifold::So3 => so3_point(&v),
    })
}

fn cost(raw: RawCost) -> CliResult<CostSpec> {
    finite("cost.alpha", raw.alpha)?;
    if raw.alpha <= 0.0 {
        return Err(CliError::validation("cost.alpha", format!("must be > 0, got {}", raw.alpha)));
    }
    finite("cost.gamma", raw.gamma)?;
    let q = match raw.q_weights {
        None => Matrix2::identity(),
        Some(rows) => {
            let q = Matrix2::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1]);
            if q.iter().any(|x| !x.is_finite()) || (q - q.transpose()).abs().max() > 1e-12 {
                return Err(CliError::validation("cost.q_weights", "must be finite and symmetric"));
            }
            if q.symmetric_eigenvalues().min() < 0.0 {
                return Err(CliError::validation("cost.q_weights", "must be positive semidefinite"));
            }
            q
        }
    };
    let a_matrix = match raw.a_matrix {
        None => None,
        Some(name) => Some(AMatrixMode::from_name(&name).ok_or_else(|| {
            CliError::validation(
                "cost.a_matrix",
                format!("unknown mode {name:?}; expected paper-regulation, paper-tracking or reconciled"),
            )
        })?),
    };
    let params = CostParams::with_weights(raw.alpha, raw.gamma, q).map_err(|e| CliError::validation("cost", e.to_string()))?;
    Ok(CostSpec { params, a_matrix })
}

fn avoidance(raw: RawAvoidance, alpha: Option<f64>) -> CliResult<AvoidanceSpec> {
    let n = raw.dimension;
    if raw.manifold == Manifold::So3 && n != 3 {
        return Err(CliError::validation("avoidance.dimension", format!("so3 scenarios have dimension 3, got {n}")));
    }
    if !(1..=3).contains(&n) {
        return Err(CliError::validation("avoidance.dimension", format!("must be 1, 2 or 3, got {n}")));
    }
    let alpha = alpha.ok_or_else(|| CliError::validation("cost", "avoidance scenarios need cost.alpha"))?;
    let q0 = point("avoidance.q0", raw.manifold, &raw.q0, n)?;
    let v0 = raw.v0.unwrap_or_else(|| vec![0.0; n]);
    if v0.len() != n || v0.iter().any(|x| !x.is_finite()) {
        return Err(CliError::validation("avoidance.v0", format!("expected {n} finite entries")));
    }
    let target = point("avoidance.target", raw.manifold, &raw.target, n)?;
    let mut obstacles = Vec::with_capacity(raw.obstacles.len());
    for (i, o) in raw.obstacles.iter().enumerate() {
        let center = point(&format!("avoidance.obstacles[{i}].center"), raw.manifold, &o.center, n)?;
        if !(o.radius > 0.0 && o.radius.is_finite()) {
            return Err(CliError::validation(&format!("avoidance.obstacles[{i}].radius"), "must be finite and > 0"));
        }
        obstacles.push(Obstacle::Ball { center, radius: o.radius });
    }
    if !(raw.horizon > 0.0 && raw.horizon.is_finite()) {
        return Err(CliError::validation("avoidance.horizon", "must be finite and > 0"));
    }
    let scenario = AvoidanceScenario::new(q0, DVector::from_vec(v0), target, alpha, raw.horizon, obstacles).map_err(|e| match e {
        geolqr::Error::ObstacleContact { index, .. } => {
            CliError::validation("avoidance.q0", format!("starts inside obstacle {index}"))
        }
        e => CliError::validation("avoidance", e.to_string()),
    })?;
    let mode = match raw.mode {
        RawBoundaryMode::Avoidance => BoundaryMode::Avoidance,
        RawBoundaryMode::Regulation => BoundaryMode::Regulation,
    };
    Ok(AvoidanceSpec { manifold: raw.manifold, scenario, mode })
}

/// Parses and validates a scenario file.
pub fn parse_config(text: &str) -> CliResult<ScenarioConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| CliError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;

    let cost = raw.cost.map(cost).transpose()?;

    let inertia = match raw.inertia {
        None => InertiaTensor::spherical(),
        Some(rows) => InertiaTensor::new(Matrix3::from_fn(|i, j| rows[i][j]))
            .map_err(|e| CliError::validation("inertia", e.to_string()))?,
    };
    let h = raw.sim.h.unwrap_or(DEFAULT_H);
    if !(h > 0.0 && h <= 0.01) {
        return Err(CliError::validation("sim.h", format!("must satisfy 0 < h <= 0.01, got {h}")));
    }
    let t_end = raw.sim.t_end.unwrap_or(DEFAULT_T_END);
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(CliError::validation("sim.t_end", format!("must be finite and > 0, got {t_end}")));
    }
    let sim = SimParams::new(h, t_end, inertia).map_err(|e| CliError::validation("sim", e.to_string()))?;

    let initial = match raw.initial {
        None => None,
        Some(init) => {
            let r = rotation("initial.rotation", &init.rotation)?;
            if init.omega.iter().any(|x| !x.is_finite()) {
                return Err(CliError::validation("initial.omega", "must be finite"));
            }
            Some(RigidBodyState::new(r, Vector3::from(init.omega)))
        }
    };
    let goal = match raw.goal {
        None => RegulationGoal::default(),
        Some(g) => RegulationGoal::new(rotation("goal.rotation", &g.rotation)?),
    };
    let reference = match raw.reference {
        None => None,
        Some(r) => {
            let omega_ref: [Vec<f64>; 3] = r.omega_ref.try_into().map_err(|v: Vec<Vec<f64>>| {
                CliError::validation("reference.omega_ref", format!("expected 3 coefficient lists, got {}", v.len()))
            })?;
            if omega_ref.iter().flatten().any(|c| !c.is_finite()) {
                return Err(CliError::validation("reference.omega_ref", "coefficients must be finite"));
            }
            let rotation = match r.rotation {
                None => Rotation::identity(),
                Some(rows) => rotation("reference.rotation", &rows)?,
            };
            Some(ReferenceSpec { omega_ref, rotation })
        }
    };
    let avoidance = raw
        .avoidance
        .map(|a| avoidance(a, cost.as_ref().map(|c| c.params.alpha)))
        .transpose()?;
    let decimation = raw.output.decimation.unwrap_or(DEFAULT_DECIMATION);
    if decimation == 0 {
        return Err(CliError::validation("output.decimation", "must be >= 1"));
    }

    Ok(ScenarioConfig {
        command: raw.command,
        cost,
        sim,
        initial,
        goal,
        reference,
        controller: ControllerSpec {
            gain_source: raw.controller.gain_source,
            feedforward_accel_term: raw.controller.feedforward_accel_term,
        },
        avoidance,
        output: OutputSpec { dir: raw.output.dir, decimation },
    })
}

impl ScenarioConfig {
    /// Checks that the sections `cmd` needs are present and that the
    /// command key, when given, agrees with `cmd`.
    pub fn require(&self, cmd: CommandKind) -> CliResult<()> {
        if let Some(c) = self.command {
            if c != cmd {
                return Err(CliError::validation(
                    "command",
                    format!("config is for {:?} but {:?} was requested", c.name(), cmd.name()),
                ));
            }
        }
        let needs_mode = matches!(cmd, CommandKind::Gains | CommandKind::Regulate | CommandKind::Track);
        if needs_mode {
            let c = self.cost.as_ref().ok_or_else(|| CliError::validation("cost", "required"))?;
            if c.a_matrix.is_none() {
                return Err(CliError::validation("cost.a_matrix", "required; the drift matrix mode is never inferred"));
            }
        }
        match cmd {
            CommandKind::Regulate | CommandKind::Track if self.initial.is_none() => {
                Err(CliError::validation("initial", "required"))
            }
            CommandKind::Regulate if self.controller.gain_source == GainSourceKind::Dre => Err(CliError::validation(
                "controller.gain_source",
                "regulation uses constant gains; dre is only available for track",
            )),
            CommandKind::Track if self.reference.is_none() => Err(CliError::validation("reference", "required")),
            CommandKind::Avoid if self.avoidance.is_none() => Err(CliError::validation("avoidance", "required")),
            _ => Ok(()),
        }
    }

    pub fn cost_spec(&self) -> CliResult<(&CostParams, AMatrixMode)> {
        let c = self.cost.as_ref().ok_or_else(|| CliError::validation("cost", "required"))?;
        let mode = c.a_matrix.ok_or_else(|| CliError::validation("cost.a_matrix", "required"))?;
        Ok((&c.params, mode))
    }
}
