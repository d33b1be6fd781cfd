//! Leader-following formation control for second-order multi-agent systems
//! with online distributed goal assignment.
//!
//! Followers track goal slots defined relative to a virtual leader whose
//! state they reconstruct through a distributed estimator over a
//! range-limited network. At scheduled instants a pair of agents may swap
//! both their goals and their control-graph neighborhoods whenever the swap
//! strictly reduces their compounded tracking error; the simulator verifies
//! at runtime that every accepted swap drops the closed-loop Lyapunov value
//! by exactly half the error improvement.
//!
//! ## Modules
//!
//! - [`graph`]: communication/control graphs, matrices, spanning-tree and
//!   neighbor-exchange machinery
//! - [`dynamics`]: double-integrator model, leader trajectories, RK4
//! - [`estimator`]: distributed leader observer and stability tooling
//! - [`controller`]: backstepping surfaces, control laws, Lyapunov value
//! - [`assignment`]: pair scheduling and the goal-exchange transaction
//! - [`quadrotor`]: 12-state quadrotor plant with sliding-mode attitude
//!   tracking behind the same outer loop
//! - [`sim`]: scenario files, orchestrator, logs, metrics, analysis

pub mod assignment;
pub mod controller;
pub mod dynamics;
pub mod estimator;
pub mod graph;
pub mod quadrotor;
pub mod sim;

pub use assignment::{
    AssignmentSchedule, ExchangeEvent, ExchangeReason, GoalMap, PairPolicy,
};
pub use controller::{ControlGains, ErrorSurfaces};
pub use dynamics::{AgentState, LeaderSignal, LeaderTrajectory};
pub use estimator::{EstimatorGains, EstimatorState};
pub use graph::{CommGraph, ControlGraph, GraphMatrices};
pub use quadrotor::{QuadInputs, QuadParams, QuadState};
pub use sim::{
    analyze, compute_metrics, run_scenario, Metrics, RunLog, ScenarioConfig, SimError,
};
