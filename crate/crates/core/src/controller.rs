//! Backstepping formation controller: error surfaces built on the estimated
//! leader state, the virtual/actual control laws, the quadratic Lyapunov
//! value over the stacked surfaces, and the global formation error.

use nalgebra::DVector;
use thiserror::Error;

use crate::assignment::GoalMap;
use crate::dynamics::{AgentState, LeaderSignal};
use crate::estimator::EstimatorState;

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("control gains must be strictly positive")]
    NonPositiveGain,
    #[error("gain count {gains} does not match follower count {followers}")]
    GainCountMismatch { gains: usize, followers: usize },
}

/// Per-follower backstepping gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGains {
    k1: Vec<f64>,
    k2: Vec<f64>,
}

impl ControlGains {
    pub fn new(k1: Vec<f64>, k2: Vec<f64>) -> Result<Self, ControllerError> {
        if k1.len() != k2.len() {
            return Err(ControllerError::GainCountMismatch {
                gains: k2.len(),
                followers: k1.len(),
            });
        }
        if k1.iter().chain(&k2).any(|&k| !k.is_finite() || k <= 0.0) {
            return Err(ControllerError::NonPositiveGain);
        }
        Ok(Self { k1, k2 })
    }

    pub fn uniform(n: usize, k1: f64, k2: f64) -> Result<Self, ControllerError> {
        Self::new(vec![k1; n], vec![k2; n])
    }

    pub fn n(&self) -> usize {
        self.k1.len()
    }

    pub fn k1(&self) -> &[f64] {
        &self.k1
    }

    pub fn k2(&self) -> &[f64] {
        &self.k2
    }

    /// Smallest gain across both families; sets the guaranteed decay rate
    /// of the Lyapunov value (`2 * k_min`).
    pub fn k_min(&self) -> f64 {
        self.k1
            .iter()
            .chain(&self.k2)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Stacked backstepping error surfaces: `e1[i]` is the position error of
/// follower `i` against its estimated leader plus assigned goal, `e2[i]`
/// the velocity error against the virtual control.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSurfaces {
    pub e1: Vec<DVector<f64>>,
    pub e2: Vec<DVector<f64>>,
}

impl ErrorSurfaces {
    pub fn n(&self) -> usize {
        self.e1.len()
    }
}

/// Computes both error surfaces for every follower.
pub fn error_surfaces(
    states: &[AgentState],
    est: &EstimatorState,
    goals: &GoalMap,
    gains: &ControlGains,
) -> ErrorSurfaces {
    let n = states.len();
    let mut e1 = Vec::with_capacity(n);
    let mut e2 = Vec::with_capacity(n);
    for (i, state) in states.iter().enumerate() {
        let e1_i = &state.p - &est.p_hat[i] - goals.goal(i + 1);
        let zeta = virtual_control(&e1_i, &est.v_hat[i], gains.k1[i]);
        e2.push(&state.v - zeta);
        e1.push(e1_i);
    }
    ErrorSurfaces { e1, e2 }
}

/// Virtual velocity command for one follower.
pub fn virtual_control(e1_i: &DVector<f64>, v_hat_i: &DVector<f64>, k1_i: f64) -> DVector<f64> {
    v_hat_i - e1_i * k1_i
}

/// Analytic time derivative of the virtual control, expanded through the
/// closed-loop surface dynamics with piecewise-constant goals.
pub fn virtual_control_rate(
    e1_i: &DVector<f64>,
    e2_i: &DVector<f64>,
    u_hat_i: &DVector<f64>,
    k1_i: f64,
) -> DVector<f64> {
    u_hat_i - (e2_i - e1_i * k1_i) * k1_i
}

/// Acceleration command closing the backstepping loop.
pub fn actual_control(
    e1_i: &DVector<f64>,
    e2_i: &DVector<f64>,
    zeta_dot_i: &DVector<f64>,
    k2_i: f64,
) -> DVector<f64> {
    zeta_dot_i - e2_i * k2_i - e1_i
}

/// Quadratic Lyapunov value over the stacked surfaces.
pub fn lyapunov_v(e: &ErrorSurfaces) -> f64 {
    let sum: f64 = e
        .e1
        .iter()
        .chain(&e.e2)
        .map(|v| v.norm_squared())
        .sum();
    0.5 * sum
}

/// Formation error against the true leader: `p_i - p0 - goal_i`.
pub fn global_formation_error(
    states: &[AgentState],
    leader: &LeaderSignal,
    goals: &GoalMap,
) -> Vec<DVector<f64>> {
    states
        .iter()
        .enumerate()
        .map(|(i, s)| &s.p - &leader.p0 - goals.goal(i + 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn goals_two() -> GoalMap {
        GoalMap::new(vec![dvector![1.0, 0.0], dvector![0.0, 1.0]])
    }

    fn estimator_two() -> EstimatorState {
        EstimatorState {
            p_hat: vec![dvector![0.5, 0.5], dvector![-0.5, 0.5]],
            v_hat: vec![dvector![0.1, 0.0], dvector![0.0, 0.1]],
            u_hat: vec![dvector![0.0, 0.0], dvector![0.0, 0.0]],
        }
    }

    #[test]
    fn on_goal_on_velocity_surfaces_vanish() {
        let goals = goals_two();
        let est = estimator_two();
        let states: Vec<AgentState> = (0..2)
            .map(|i| AgentState::new(&est.p_hat[i] + goals.goal(i + 1), est.v_hat[i].clone()))
            .collect();
        let gains = ControlGains::uniform(2, 0.5, 1.0).unwrap();
        let e = error_surfaces(&states, &est, &goals, &gains);
        for i in 0..2 {
            assert_eq!(e.e1[i], DVector::zeros(2));
            assert_eq!(e.e2[i], DVector::zeros(2));
        }
    }

    #[test]
    fn velocity_surface_scales_position_offset_by_gain() {
        let goals = goals_two();
        let est = estimator_two();
        let offset = dvector![0.3, -0.2];
        let states: Vec<AgentState> = (0..2)
            .map(|i| {
                AgentState::new(
                    &est.p_hat[i] + goals.goal(i + 1) + &offset,
                    est.v_hat[i].clone(),
                )
            })
            .collect();
        let gains = ControlGains::uniform(2, 0.7, 1.0).unwrap();
        let e = error_surfaces(&states, &est, &goals, &gains);
        for i in 0..2 {
            assert!((&e.e1[i] - &offset).norm() < 1e-15);
            assert!((&e.e2[i] - &offset * 0.7).norm() < 1e-15);
        }
    }

    #[test]
    fn surfaces_match_independent_scalar_loop() {
        let goals = GoalMap::new(vec![dvector![0.3, -0.4], dvector![-1.1, 0.2]]);
        let est = estimator_two();
        let states = vec![
            AgentState::new(dvector![0.9, -0.3], dvector![0.1, -0.2]),
            AgentState::new(dvector![-0.7, 0.8], dvector![-0.1, 0.1]),
        ];
        let gains = ControlGains::new(vec![0.5, 0.8], vec![1.0, 1.2]).unwrap();
        let e = error_surfaces(&states, &est, &goals, &gains);
        for (i, state) in states.iter().enumerate() {
            for k in 0..2 {
                let e1 = state.p[k] - est.p_hat[i][k] - goals.goal(i + 1)[k];
                let zeta = -gains.k1()[i] * e1 + est.v_hat[i][k];
                let e2 = state.v[k] - zeta;
                assert!((e.e1[i][k] - e1).abs() < 1e-14);
                assert!((e.e2[i][k] - e2).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn virtual_control_without_error_is_estimated_velocity() {
        let v_hat = dvector![0.4, -0.9];
        assert_eq!(virtual_control(&DVector::zeros(2), &v_hat, 0.5), v_hat);
    }

    #[test]
    fn virtual_control_opposes_position_error() {
        let zeta = virtual_control(&dvector![1.0, 0.0], &DVector::zeros(2), 0.5);
        assert_eq!(zeta, dvector![-0.5, 0.0]);
    }

    #[test]
    fn virtual_control_is_affine_in_error() {
        let v_hat = dvector![0.2, 0.1];
        let e1 = dvector![0.7, -0.3];
        let alpha = 2.5;
        let lhs = virtual_control(&(&e1 * alpha), &v_hat, 0.6) - &v_hat;
        let rhs = (virtual_control(&e1, &v_hat, 0.6) - &v_hat) * alpha;
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn virtual_rate_reduces_to_feedforward_at_origin() {
        let u_hat = dvector![0.3, 0.4];
        let rate =
            virtual_control_rate(&DVector::zeros(2), &DVector::zeros(2), &u_hat, 0.5);
        assert_eq!(rate, u_hat);
    }

    #[test]
    fn virtual_rate_squares_gain_on_position_error() {
        let rate = virtual_control_rate(
            &dvector![1.0, 0.0],
            &DVector::zeros(2),
            &DVector::zeros(2),
            1.0,
        );
        assert_eq!(rate, dvector![1.0, 0.0]);
    }

    #[test]
    fn actual_control_is_feedforward_at_origin() {
        let zeta_dot = dvector![0.7, -0.2];
        let u = actual_control(&DVector::zeros(2), &DVector::zeros(2), &zeta_dot, 1.0);
        assert_eq!(u, zeta_dot);
    }

    #[test]
    fn actual_control_substitution() {
        let u = actual_control(
            &dvector![1.0, 0.0],
            &dvector![0.0, 1.0],
            &DVector::zeros(2),
            1.0,
        );
        assert_eq!(u, dvector![-1.0, -1.0]);
    }

    #[test]
    fn lyapunov_value_of_zero_surfaces() {
        let e = ErrorSurfaces {
            e1: vec![DVector::zeros(2); 3],
            e2: vec![DVector::zeros(2); 3],
        };
        assert_eq!(lyapunov_v(&e), 0.0);
    }

    #[test]
    fn lyapunov_value_single_entry() {
        let e = ErrorSurfaces {
            e1: vec![dvector![3.0, 4.0]],
            e2: vec![DVector::zeros(2)],
        };
        assert_eq!(lyapunov_v(&e), 12.5);
    }

    #[test]
    fn formation_error_vanishes_on_formation() {
        let goals = goals_two();
        let leader = LeaderSignal {
            p0: dvector![2.0, -1.0],
            v0: DVector::zeros(2),
            u0: DVector::zeros(2),
            u0_dot: DVector::zeros(2),
        };
        let states: Vec<AgentState> = (0..2)
            .map(|i| AgentState::new(&leader.p0 + goals.goal(i + 1), DVector::zeros(2)))
            .collect();
        for delta in global_formation_error(&states, &leader, &goals) {
            assert_eq!(delta, DVector::zeros(2));
        }
    }

    #[test]
    fn formation_error_decomposes_into_surface_plus_estimate_error() {
        let goals = goals_two();
        let est = estimator_two();
        let leader = LeaderSignal {
            p0: dvector![0.3, 0.9],
            v0: DVector::zeros(2),
            u0: DVector::zeros(2),
            u0_dot: DVector::zeros(2),
        };
        let states = vec![
            AgentState::new(dvector![1.4, -0.5], dvector![0.0, 0.0]),
            AgentState::new(dvector![-0.2, 0.7], dvector![0.0, 0.0]),
        ];
        let gains = ControlGains::uniform(2, 0.5, 1.0).unwrap();
        let e = error_surfaces(&states, &est, &goals, &gains);
        let deltas = global_formation_error(&states, &leader, &goals);
        for (i, delta) in deltas.iter().enumerate() {
            let p_tilde = &est.p_hat[i] - &leader.p0;
            assert!((delta - &e.e1[i] - p_tilde).norm() < 1e-15);
        }
    }
}
