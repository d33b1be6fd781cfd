//! Scenario files: JSON schema, validation, and typed accessors used by
//! the orchestrator and the analysis commands. All physical quantities are
//! SI; angles are radians.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{AssignmentSchedule, GoalMap};
use crate::controller::ControlGains;
use crate::dynamics::{AgentState, LeaderTrajectory};
use crate::estimator::EstimatorGains;
use crate::graph::{build_comm_graph, has_spanning_tree, ControlGraph};
use crate::quadrotor::{AttitudeGains, QuadParams, QuadState, SwitchingLaw};
use nalgebra::DVector;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read scenario file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    DoubleIntegrator,
    Quadrotor,
}

/// Scalar gains broadcast to every follower, or one value per follower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Uniform(f64),
    PerAgent(Vec<f64>),
}

impl GainSpec {
    pub fn resolve(&self, n: usize, field: &str) -> Result<Vec<f64>, ConfigError> {
        match self {
            GainSpec::Uniform(g) => Ok(vec![*g; n]),
            GainSpec::PerAgent(v) => {
                if v.len() != n {
                    return Err(invalid(
                        field,
                        format!("expected {n} entries, got {}", v.len()),
                    ));
                }
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGainsSpec {
    pub k1: GainSpec,
    pub k2: GainSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorGainsSpec {
    pub gamma1: GainSpec,
    pub gamma2: GainSpec,
    pub gamma3: GainSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGraphSpec {
    pub follower_edges: Vec<(usize, usize)>,
    pub leader_flags: Vec<bool>,
}

/// Declared bounds on the leader acceleration and jerk magnitudes,
/// monitored at sampling times during a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeaderBounds {
    pub accel: f64,
    pub jerk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerInit {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    /// Roll, pitch, yaw; quadrotor plants only, defaults to level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attitude: Option<[f64; 3]>,
    /// Body rates; quadrotor plants only, defaults to rest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<[f64; 3]>,
}

/// How the leader estimates are seeded at the start of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorInit {
    /// Position estimate seeded with the follower's own position, velocity
    /// and acceleration estimates at zero.
    #[default]
    OwnPosition,
    /// Everything at zero.
    Zero,
    /// Exact leader signal at time zero broadcast to every follower, for
    /// staged scenarios where agents are briefed before takeoff.
    Leader,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttitudeConfig {
    pub lambda: f64,
    pub k: f64,
    #[serde(default = "default_boundary_layer")]
    pub boundary_layer: f64,
    #[serde(default)]
    pub use_sign: bool,
}

fn default_boundary_layer() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    pub dimension: usize,
    pub plant: PlantKind,
    pub dt: f64,
    pub t_end: f64,
    pub comm_range: f64,
    #[serde(default)]
    pub seed: u64,
    pub leader: LeaderTrajectory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader_bounds: Option<LeaderBounds>,
    pub followers: Vec<FollowerInit>,
    pub goals: Vec<Vec<f64>>,
    pub control_graph: ControlGraphSpec,
    pub control_gains: ControlGainsSpec,
    pub estimator_gains: EstimatorGainsSpec,
    #[serde(default)]
    pub estimator_init: EstimatorInit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<AssignmentSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attitude: Option<AttitudeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_params: Option<QuadParams>,
}

impl ScenarioConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization cannot fail")
    }

    pub fn n(&self) -> usize {
        self.followers.len()
    }

    /// Number of integration steps; `t_end` must sit on the grid.
    pub fn step_count(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Assignment period expressed in integration steps.
    pub fn assignment_period_steps(&self) -> Option<usize> {
        self.assignment
            .as_ref()
            .map(|a| (a.period / self.dt).round() as usize)
    }

    pub fn log_stride(&self) -> usize {
        self.log_every
            .unwrap_or(if self.n() <= 20 { 1 } else { 10 })
            .max(1)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != 1 {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}", self.schema_version),
            ));
        }
        if !matches!(self.dimension, 2 | 3) {
            return Err(invalid("dimension", "must be 2 or 3"));
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(invalid("dt", "must be positive"));
        }
        if !self.t_end.is_finite() || self.t_end < 0.0 {
            return Err(invalid("t_end", "must be non-negative"));
        }
        let steps_frac = self.t_end / self.dt;
        if (steps_frac - steps_frac.round()).abs() > 1e-6 {
            return Err(invalid("t_end", "must be a multiple of dt"));
        }
        if !self.comm_range.is_finite() || self.comm_range <= 0.0 {
            return Err(invalid("comm_range", "must be positive"));
        }
        if self.leader.dimension() != self.dimension {
            return Err(invalid(
                "leader",
                format!(
                    "trajectory dimension {} does not match scenario dimension {}",
                    self.leader.dimension(),
                    self.dimension
                ),
            ));
        }
        let n = self.n();
        if n == 0 {
            return Err(invalid("followers", "need at least one follower"));
        }
        for (i, f) in self.followers.iter().enumerate() {
            if f.position.len() != self.dimension || f.velocity.len() != self.dimension {
                return Err(invalid(
                    &format!("followers[{i}]"),
                    "position/velocity dimension mismatch",
                ));
            }
            if f.position
                .iter()
                .chain(&f.velocity)
                .any(|x| !x.is_finite())
            {
                return Err(invalid(&format!("followers[{i}]"), "non-finite entry"));
            }
        }
        if self.goals.len() != n {
            return Err(invalid(
                "goals",
                format!("expected {n} goals, got {}", self.goals.len()),
            ));
        }
        for (i, g) in self.goals.iter().enumerate() {
            if g.len() != self.dimension || g.iter().any(|x| !x.is_finite()) {
                return Err(invalid(&format!("goals[{i}]"), "bad goal vector"));
            }
        }
        if self.control_graph.leader_flags.len() != n {
            return Err(invalid(
                "control_graph.leader_flags",
                format!("expected {n} flags"),
            ));
        }
        let ctrl = self.control_graph()?;
        if !has_spanning_tree(&ctrl) {
            return Err(invalid(
                "control_graph",
                "leader cannot reach every follower",
            ));
        }
        let positions: Vec<DVector<f64>> = self
            .followers
            .iter()
            .map(|f| DVector::from_vec(f.position.clone()))
            .collect();
        let comm = build_comm_graph(&positions, self.comm_range)
            .map_err(|e| invalid("followers", e.to_string()))?;
        if !ctrl.is_subgraph_of(&comm) {
            return Err(invalid(
                "control_graph",
                "control edges exceed the communication range at start",
            ));
        }
        self.control_gains()?;
        self.estimator_gains()?;
        if let Some(a) = &self.assignment {
            if !a.period.is_finite() || a.period <= 0.0 {
                return Err(invalid("assignment.period", "must be positive"));
            }
            let ratio = a.period / self.dt;
            if (ratio - ratio.round()).abs() > 1e-6 || ratio.round() < 1.0 {
                return Err(invalid(
                    "assignment.period",
                    "must be a positive multiple of dt",
                ));
            }
        }
        if let Some(le) = self.log_every {
            if le == 0 {
                return Err(invalid("log_every", "must be at least 1"));
            }
        }
        match self.plant {
            PlantKind::DoubleIntegrator => {}
            PlantKind::Quadrotor => {
                if self.dimension != 3 {
                    return Err(invalid("dimension", "quadrotor plants are 3-D"));
                }
                let att = self
                    .attitude
                    .as_ref()
                    .ok_or_else(|| invalid("attitude", "required for quadrotor plants"))?;
                AttitudeGains::uniform(att.lambda, att.k, att.boundary_layer)
                    .map_err(|e| invalid("attitude", e.to_string()))?;
                self.quad_params()
                    .validate()
                    .map_err(|e| invalid("quad_params", e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn control_graph(&self) -> Result<ControlGraph, ConfigError> {
        ControlGraph::from_edges(
            self.n(),
            &self.control_graph.follower_edges,
            self.control_graph.leader_flags.clone(),
        )
        .map_err(|e| invalid("control_graph", e.to_string()))
    }

    pub fn control_gains(&self) -> Result<ControlGains, ConfigError> {
        let n = self.n();
        ControlGains::new(
            self.control_gains.k1.resolve(n, "control_gains.k1")?,
            self.control_gains.k2.resolve(n, "control_gains.k2")?,
        )
        .map_err(|e| invalid("control_gains", e.to_string()))
    }

    pub fn estimator_gains(&self) -> Result<EstimatorGains, ConfigError> {
        let n = self.n();
        EstimatorGains::new(
            self.estimator_gains
                .gamma1
                .resolve(n, "estimator_gains.gamma1")?,
            self.estimator_gains
                .gamma2
                .resolve(n, "estimator_gains.gamma2")?,
            self.estimator_gains
                .gamma3
                .resolve(n, "estimator_gains.gamma3")?,
        )
        .map_err(|e| invalid("estimator_gains", e.to_string()))
    }

    pub fn goal_map(&self) -> GoalMap {
        GoalMap::new(
            self.goals
                .iter()
                .map(|g| DVector::from_vec(g.clone()))
                .collect(),
        )
    }

    pub fn initial_states(&self) -> Vec<AgentState> {
        self.followers
            .iter()
            .map(|f| {
                AgentState::new(
                    DVector::from_vec(f.position.clone()),
                    DVector::from_vec(f.velocity.clone()),
                )
            })
            .collect()
    }

    pub fn initial_quad_states(&self) -> Vec<QuadState> {
        self.followers
            .iter()
            .map(|f| {
                let att = f.attitude.unwrap_or([0.0; 3]);
                let rates = f.rates.unwrap_or([0.0; 3]);
                QuadState {
                    x: f.position[0],
                    y: f.position[1],
                    z: f.position[2],
                    vx: f.velocity[0],
                    vy: f.velocity[1],
                    vz: f.velocity[2],
                    phi: att[0],
                    theta: att[1],
                    psi: att[2],
                    phi_rate: rates[0],
                    theta_rate: rates[1],
                    psi_rate: rates[2],
                }
            })
            .collect()
    }

    pub fn attitude_gains(&self) -> Option<AttitudeGains> {
        self.attitude
            .as_ref()
            .and_then(|a| AttitudeGains::uniform(a.lambda, a.k, a.boundary_layer).ok())
    }

    pub fn switching_law(&self) -> SwitchingLaw {
        match self.attitude.as_ref().map(|a| a.use_sign) {
            Some(true) => SwitchingLaw::Sign,
            _ => SwitchingLaw::Saturation,
        }
    }

    pub fn quad_params(&self) -> QuadParams {
        self.quad_params.clone().unwrap_or_default()
    }

    /// Copy of this scenario with assignment disabled, the baseline used
    /// for comparisons.
    pub fn without_assignment(&self) -> Self {
        let mut cfg = self.clone();
        cfg.assignment = None;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> serde_json::Value {
        serde_json::json!({
            "schema_version": 1,
            "name": "mini",
            "dimension": 2,
            "plant": "double_integrator",
            "dt": 0.001,
            "t_end": 0.01,
            "comm_range": 5.0,
            "leader": {"kind": "planar_sine", "speed": 0.2, "amplitude": 0.2, "frequency": 0.5},
            "followers": [
                {"position": [0.0, 0.0], "velocity": [0.0, 0.0]},
                {"position": [1.0, 0.0], "velocity": [0.0, 0.0]}
            ],
            "goals": [[0.5, 0.0], [-0.5, 0.0]],
            "control_graph": {"follower_edges": [[1, 2]], "leader_flags": [true, false]},
            "control_gains": {"k1": 0.5, "k2": 1.0},
            "estimator_gains": {"gamma1": 100.0, "gamma2": 100.0, "gamma3": 20.0}
        })
    }

    #[test]
    fn minimal_scenario_parses_and_validates() {
        let cfg = ScenarioConfig::from_json_str(&minimal_json().to_string()).unwrap();
        assert_eq!(cfg.n(), 2);
        assert_eq!(cfg.step_count(), 10);
        assert_eq!(cfg.log_stride(), 1);
        assert!(cfg.assignment.is_none());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v = minimal_json();
        v["surprise"] = serde_json::json!(true);
        assert!(matches!(
            ScenarioConfig::from_json_str(&v.to_string()),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn missing_spanning_tree_is_a_config_error() {
        let mut v = minimal_json();
        v["control_graph"]["leader_flags"] = serde_json::json!([false, false]);
        let err = ScenarioConfig::from_json_str(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("control_graph"));
    }

    #[test]
    fn control_edges_must_fit_comm_range() {
        let mut v = minimal_json();
        v["comm_range"] = serde_json::json!(0.5);
        let err = ScenarioConfig::from_json_str(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("communication range"));
    }

    #[test]
    fn assignment_period_must_sit_on_grid() {
        let mut v = minimal_json();
        v["assignment"] =
            serde_json::json!({"period": 0.0015, "pair_policy": "round_robin", "seed": 0});
        assert!(ScenarioConfig::from_json_str(&v.to_string()).is_err());
        v["assignment"] =
            serde_json::json!({"period": 0.002, "pair_policy": "round_robin", "seed": 0});
        let cfg = ScenarioConfig::from_json_str(&v.to_string()).unwrap();
        assert_eq!(cfg.assignment_period_steps(), Some(2));
    }

    #[test]
    fn per_agent_gains_must_match_count() {
        let mut v = minimal_json();
        v["control_gains"]["k1"] = serde_json::json!([0.5, 0.5, 0.5]);
        let err = ScenarioConfig::from_json_str(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("k1"));
    }

    #[test]
    fn quadrotor_requires_attitude_config() {
        let mut v = minimal_json();
        v["plant"] = serde_json::json!("quadrotor");
        v["dimension"] = serde_json::json!(3);
        v["leader"] = serde_json::json!({
            "kind": "helix", "radius": 10.0, "frequency": 0.5,
            "climb_rate": 1.0, "z_offset": 30.0
        });
        v["followers"] = serde_json::json!([
            {"position": [0.0, 0.0, 0.0], "velocity": [0.0, 0.0, 0.0]},
            {"position": [1.0, 0.0, 0.0], "velocity": [0.0, 0.0, 0.0]}
        ]);
        v["goals"] = serde_json::json!([[0.5, 0.0, 0.0], [-0.5, 0.0, 0.0]]);
        let err = ScenarioConfig::from_json_str(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("attitude"));
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = ScenarioConfig::from_json_str(&minimal_json().to_string()).unwrap();
        let again = ScenarioConfig::from_json_str(&cfg.to_json_pretty()).unwrap();
        assert_eq!(cfg, again);
    }
}
