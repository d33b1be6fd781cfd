//! Scenario orchestration: the fixed-step integration loop with assignment
//! events applied between steps, run logging, and the Lyapunov jump monitor
//! verifying the exchange guarantee while the simulation runs.
//!
//! Per step the loop rebuilds the communication graph from current
//! positions, logs the surfaces under the goals in force (so records at
//! exchange instants hold the left limit), applies at most one assignment
//! proposal, then advances plant and estimator jointly with one RK4 step.
//! Everything is deterministic: identical configurations produce
//! byte-identical output files.

pub mod analyze;
pub mod log;
pub mod metrics;
pub mod scenario;

pub use analyze::{analyze, AnalysisReport};
pub use log::{comparison_csv, read_lyapunov_csv, JumpCheck, RunLog, StepRecord};
pub use metrics::{compute_metrics, Metrics, DEFAULT_V_THRESHOLD};
pub use scenario::{ConfigError, EstimatorInit, PlantKind, ScenarioConfig};

use std::collections::BTreeSet;

use nalgebra::DVector;
use thiserror::Error;

use crate::assignment::{assignment_step, select_pair, AssignmentError, GoalMap};
use crate::controller::{self, ControlGains, ControllerError};
use crate::dynamics::{rk4_step, AgentState, DynamicsError};
use crate::estimator::{estimator_deriv, EstimatorError, EstimatorGains, EstimatorState};
use crate::graph::{build_comm_graph, has_spanning_tree, ControlGraph, GraphError};
use crate::quadrotor::{
    quad_deriv, quad_outer_loop, AttitudeGains, AttitudeRefFilter, QuadError, QuadParams,
    QuadState, SwitchingLaw,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("control graph lost its spanning tree at t={t}")]
    SpanningTreeLost { t: f64 },
}

/// Offsets into the flat integration vector.
#[derive(Debug, Clone, Copy)]
struct StateCodec {
    plant: PlantKind,
    n: usize,
    d: usize,
}

/// Quad block: 12 body states plus 4 attitude-reference filter states.
const QUAD_BLOCK: usize = 16;

impl StateCodec {
    fn plant_block(&self) -> usize {
        match self.plant {
            PlantKind::DoubleIntegrator => 2 * self.d,
            PlantKind::Quadrotor => QUAD_BLOCK,
        }
    }

    fn est_offset(&self) -> usize {
        self.n * self.plant_block()
    }

    fn len(&self) -> usize {
        self.est_offset() + self.n * 3 * self.d
    }

    fn agent_states(&self, y: &DVector<f64>) -> Vec<AgentState> {
        let d = self.d;
        (0..self.n)
            .map(|i| {
                let base = i * self.plant_block();
                match self.plant {
                    PlantKind::DoubleIntegrator => AgentState::new(
                        y.rows(base, d).into_owned(),
                        y.rows(base + d, d).into_owned(),
                    ),
                    PlantKind::Quadrotor => AgentState::new(
                        y.rows(base, 3).into_owned(),
                        y.rows(base + 3, 3).into_owned(),
                    ),
                }
            })
            .collect()
    }

    fn quad_states(&self, y: &DVector<f64>) -> Vec<QuadState> {
        (0..self.n)
            .map(|i| {
                let base = i * QUAD_BLOCK;
                QuadState::from_slice(&y.as_slice()[base..base + 12])
            })
            .collect()
    }

    fn filters(&self, y: &DVector<f64>) -> Vec<AttitudeRefFilter> {
        (0..self.n)
            .map(|i| {
                let base = i * QUAD_BLOCK + 12;
                AttitudeRefFilter {
                    phi: y[base],
                    phi_rate: y[base + 1],
                    theta: y[base + 2],
                    theta_rate: y[base + 3],
                }
            })
            .collect()
    }

    fn estimator(&self, y: &DVector<f64>) -> EstimatorState {
        let d = self.d;
        let mut est = EstimatorState::zeros(self.n, d);
        for i in 0..self.n {
            let base = self.est_offset() + i * 3 * d;
            est.p_hat[i] = y.rows(base, d).into_owned();
            est.v_hat[i] = y.rows(base + d, d).into_owned();
            est.u_hat[i] = y.rows(base + 2 * d, d).into_owned();
        }
        est
    }

    fn write_estimator(&self, target: &mut DVector<f64>, est: &EstimatorState) {
        let d = self.d;
        for i in 0..self.n {
            let base = self.est_offset() + i * 3 * d;
            target.rows_mut(base, d).copy_from(&est.p_hat[i]);
            target.rows_mut(base + d, d).copy_from(&est.v_hat[i]);
            target.rows_mut(base + 2 * d, d).copy_from(&est.u_hat[i]);
        }
    }
}

struct QuadSetup {
    params: QuadParams,
    gains: AttitudeGains,
    law: SwitchingLaw,
}

/// Coupled plant-plus-estimator vector field under a fixed control graph
/// and goal map (both only change between integration steps).
struct CoupledSystem<'a> {
    codec: StateCodec,
    leader: &'a crate::dynamics::LeaderTrajectory,
    ctrl: &'a ControlGraph,
    goals: &'a GoalMap,
    gains: &'a ControlGains,
    est_gains: &'a EstimatorGains,
    quad: Option<&'a QuadSetup>,
}

impl CoupledSystem<'_> {
    fn eval(&self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>, SimError> {
        let leader = self.leader.signal(t);
        let est = self.codec.estimator(y);
        let est_deriv = estimator_deriv(&est, self.ctrl, &leader, self.est_gains);
        let mut dy = DVector::zeros(y.len());
        let d = self.codec.d;
        match self.codec.plant {
            PlantKind::DoubleIntegrator => {
                let states = self.codec.agent_states(y);
                let surfaces =
                    controller::error_surfaces(&states, &est, self.goals, self.gains);
                for (i, state) in states.iter().enumerate() {
                    let zeta_dot = controller::virtual_control_rate(
                        &surfaces.e1[i],
                        &surfaces.e2[i],
                        &est.u_hat[i],
                        self.gains.k1()[i],
                    );
                    let u = controller::actual_control(
                        &surfaces.e1[i],
                        &surfaces.e2[i],
                        &zeta_dot,
                        self.gains.k2()[i],
                    );
                    let base = i * self.codec.plant_block();
                    dy.rows_mut(base, d).copy_from(&state.v);
                    dy.rows_mut(base + d, d).copy_from(&u);
                }
            }
            PlantKind::Quadrotor => {
                let setup = self.quad.expect("quad setup present for quadrotor plants");
                let quads = self.codec.quad_states(y);
                let filters = self.codec.filters(y);
                let outputs = quad_outer_loop(
                    &quads,
                    &est,
                    self.goals,
                    self.gains,
                    &filters,
                    &setup.gains,
                    &setup.params,
                    setup.law,
                )?;
                for i in 0..self.codec.n {
                    let body = quad_deriv(&quads[i], &outputs[i].inputs, &setup.params);
                    let base = i * QUAD_BLOCK;
                    dy.rows_mut(base, 12)
                        .copy_from_slice(&body.to_array());
                    dy[base + 12] = filters[i].phi_rate;
                    dy[base + 13] = outputs[i].filter_phi_accel;
                    dy[base + 14] = filters[i].theta_rate;
                    dy[base + 15] = outputs[i].filter_theta_accel;
                }
            }
        }
        self.codec.write_estimator(&mut dy, &est_deriv);
        Ok(dy)
    }
}

fn initial_estimator(cfg: &ScenarioConfig) -> EstimatorState {
    let n = cfg.n();
    let d = cfg.dimension;
    let mut est = EstimatorState::zeros(n, d);
    match cfg.estimator_init {
        EstimatorInit::Zero => {}
        EstimatorInit::OwnPosition => {
            for (i, f) in cfg.followers.iter().enumerate() {
                est.p_hat[i] = DVector::from_vec(f.position.clone());
            }
        }
        EstimatorInit::Leader => {
            let leader = cfg.leader.signal(0.0);
            for i in 0..n {
                est.p_hat[i] = leader.p0.clone();
                est.v_hat[i] = leader.v0.clone();
                est.u_hat[i] = leader.u0.clone();
            }
        }
    }
    est
}

fn pack_initial(cfg: &ScenarioConfig, codec: &StateCodec) -> DVector<f64> {
    let mut y = DVector::zeros(codec.len());
    match cfg.plant {
        PlantKind::DoubleIntegrator => {
            for (i, s) in cfg.initial_states().iter().enumerate() {
                let base = i * codec.plant_block();
                y.rows_mut(base, codec.d).copy_from(&s.p);
                y.rows_mut(base + codec.d, codec.d).copy_from(&s.v);
            }
        }
        PlantKind::Quadrotor => {
            for (i, q) in cfg.initial_quad_states().iter().enumerate() {
                let base = i * QUAD_BLOCK;
                y.rows_mut(base, 12).copy_from_slice(&q.to_array());
                let filter = AttitudeRefFilter::from_state(q);
                y[base + 12] = filter.phi;
                y[base + 13] = filter.phi_rate;
                y[base + 14] = filter.theta;
                y[base + 15] = filter.theta_rate;
            }
        }
    }
    codec.write_estimator(&mut y, &initial_estimator(cfg));
    y
}

/// Runs one scenario to completion and returns the full log.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunLog, SimError> {
    cfg.validate()?;
    let n = cfg.n();
    let d = cfg.dimension;
    let gains = cfg.control_gains()?;
    let est_gains = cfg.estimator_gains()?;
    let mut ctrl = cfg.control_graph()?;
    let mut goals = cfg.goal_map();
    let codec = StateCodec {
        plant: cfg.plant,
        n,
        d,
    };
    let quad_setup = match cfg.plant {
        PlantKind::DoubleIntegrator => None,
        PlantKind::Quadrotor => Some(QuadSetup {
            params: cfg.quad_params(),
            gains: cfg
                .attitude_gains()
                .expect("validated quadrotor scenario has attitude gains"),
            law: cfg.switching_law(),
        }),
    };

    let mut y = pack_initial(cfg, &codec);
    let dt = cfg.dt;
    let n_steps = cfg.step_count();
    let stride = cfg.log_stride();
    let period_steps = cfg.assignment_period_steps();

    let mut runlog = RunLog::new(cfg.name.clone(), d, n, dt);
    let mut warned_edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut warned_accel = false;
    let mut warned_jerk = false;
    let mut warned_attitude = false;
    let mut instant: u64 = 0;

    for step in 0..=n_steps {
        let t = step as f64 * dt;
        let leader = cfg.leader.signal(t);
        let states = codec.agent_states(&y);
        let est = codec.estimator(&y);

        let positions: Vec<DVector<f64>> = states.iter().map(|s| s.p.clone()).collect();
        let comm = build_comm_graph(&positions, cfg.comm_range)?;

        // Motion may stretch a control edge past the communication range;
        // that only degrades the model assumptions, so warn and continue.
        // Losing the spanning tree, checked at exchanges, is fatal.
        for (i, j) in ctrl.edges() {
            if !comm.has_edge(i, j) && warned_edges.insert((i, j)) {
                runlog.warnings.push(format!(
                    "control edge ({i},{j}) exceeds comm range starting at t={t}"
                ));
            }
        }
        if let Some(bounds) = &cfg.leader_bounds {
            if !warned_accel && leader.u0.norm() > bounds.accel * (1.0 + 1e-9) {
                warned_accel = true;
                runlog
                    .warnings
                    .push(format!("leader acceleration exceeds declared bound at t={t}"));
            }
            if !warned_jerk && leader.u0_dot.norm() > bounds.jerk * (1.0 + 1e-9) {
                warned_jerk = true;
                runlog
                    .warnings
                    .push(format!("leader jerk exceeds declared bound at t={t}"));
            }
        }
        if cfg.plant == PlantKind::Quadrotor && !warned_attitude {
            let excessive = codec.quad_states(&y).iter().any(|q| {
                q.phi.abs() >= std::f64::consts::FRAC_PI_2
                    || q.theta.abs() >= std::f64::consts::FRAC_PI_2
            });
            if excessive {
                warned_attitude = true;
                runlog
                    .warnings
                    .push(format!("attitude left the controlled envelope at t={t}"));
            }
        }

        let surfaces = controller::error_surfaces(&states, &est, &goals, &gains);
        let v = controller::lyapunov_v(&surfaces);
        let delta = controller::global_formation_error(&states, &leader, &goals);

        if step % stride == 0 || step == n_steps {
            runlog.steps.push(StepRecord {
                t,
                states: states.clone(),
                estimates: est.clone(),
                e1: surfaces.e1.clone(),
                e2: surfaces.e2.clone(),
                v,
                delta,
            });
        }

        if let (Some(schedule), Some(ps)) = (&cfg.assignment, period_steps) {
            if n >= 2 && step > 0 && step % ps == 0 {
                // The scenario-level seed folds into the draw stream so
                // sweeps can vary pair selection without touching the
                // schedule block.
                let effective = crate::assignment::AssignmentSchedule {
                    seed: schedule.seed ^ cfg.seed,
                    ..schedule.clone()
                };
                let pair = select_pair(&effective, instant, n)?;
                instant += 1;
                let outcome =
                    assignment_step(t, &comm, &ctrl, &goals, &states, &est, &gains, pair)?;
                if outcome.event.accepted {
                    let post =
                        controller::error_surfaces(&states, &est, &outcome.goals, &gains);
                    let v_post = controller::lyapunov_v(&post);
                    runlog.jump_checks.push(JumpCheck {
                        t,
                        v_pre: v,
                        v_post,
                        e_cur: outcome.event.e_cur.expect("accepted events carry e_cur"),
                        e_new: outcome.event.e_new.expect("accepted events carry e_new"),
                    });
                    ctrl = outcome.ctrl;
                    goals = outcome.goals;
                    if !has_spanning_tree(&ctrl) {
                        return Err(SimError::SpanningTreeLost { t });
                    }
                }
                runlog.events.push(outcome.event);
            }
        }

        if step == n_steps {
            break;
        }

        let system = CoupledSystem {
            codec,
            leader: &cfg.leader,
            ctrl: &ctrl,
            goals: &goals,
            gains: &gains,
            est_gains: &est_gains,
            quad: quad_setup.as_ref(),
        };
        y = rk4_step(|tt, yy| system.eval(tt, yy), &y, t, dt)?;
    }

    Ok(runlog)
}
