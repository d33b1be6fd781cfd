//! Double-integrator follower dynamics, closed-form leader trajectories,
//! and the fixed-step integrator shared by every simulation path.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("integration step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("non-finite derivative at component {index}")]
    NonFiniteDerivative { index: usize },
}

/// Position/velocity pair of one follower.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub p: DVector<f64>,
    pub v: DVector<f64>,
}

impl AgentState {
    pub fn new(p: DVector<f64>, v: DVector<f64>) -> Self {
        Self { p, v }
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }
}

/// Leader position, velocity, acceleration and jerk sampled at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderSignal {
    pub p0: DVector<f64>,
    pub v0: DVector<f64>,
    pub u0: DVector<f64>,
    pub u0_dot: DVector<f64>,
}

/// Closed-form leader trajectory; all derivatives are analytic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LeaderTrajectory {
    /// Planar drift along x with a sinusoidal sweep in y:
    /// `p0(t) = (speed * t, amplitude * sin(frequency * t))`.
    PlanarSine {
        speed: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// 3-D climb on a circle:
    /// `p0(t) = (r sin(w t), r cos(w t), climb_rate * t + z_offset)`.
    Helix {
        radius: f64,
        frequency: f64,
        climb_rate: f64,
        z_offset: f64,
    },
    /// Quadratic trajectory with constant acceleration.
    ConstantAcceleration {
        position: Vec<f64>,
        velocity: Vec<f64>,
        acceleration: Vec<f64>,
    },
    /// `p0(t) = sum_k coefficients[k] * t^k`, one vector per power.
    Polynomial { coefficients: Vec<Vec<f64>> },
}

impl LeaderTrajectory {
    pub fn dimension(&self) -> usize {
        match self {
            Self::PlanarSine { .. } => 2,
            Self::Helix { .. } => 3,
            Self::ConstantAcceleration { position, .. } => position.len(),
            Self::Polynomial { coefficients } => {
                coefficients.first().map_or(0, |c| c.len())
            }
        }
    }

    pub fn signal(&self, t: f64) -> LeaderSignal {
        leader_signal(self, t)
    }
}

/// Samples a trajectory's position and its first three derivatives at `t`.
pub fn leader_signal(traj: &LeaderTrajectory, t: f64) -> LeaderSignal {
    match traj {
        LeaderTrajectory::PlanarSine {
            speed,
            amplitude,
            frequency,
        } => {
            let (a, w) = (*amplitude, *frequency);
            let (s, c) = (w * t).sin_cos();
            LeaderSignal {
                p0: DVector::from_vec(vec![speed * t, a * s]),
                v0: DVector::from_vec(vec![*speed, a * w * c]),
                u0: DVector::from_vec(vec![0.0, -a * w * w * s]),
                u0_dot: DVector::from_vec(vec![0.0, -a * w * w * w * c]),
            }
        }
        LeaderTrajectory::Helix {
            radius,
            frequency,
            climb_rate,
            z_offset,
        } => {
            let (r, w) = (*radius, *frequency);
            let (s, c) = (w * t).sin_cos();
            LeaderSignal {
                p0: DVector::from_vec(vec![r * s, r * c, climb_rate * t + z_offset]),
                v0: DVector::from_vec(vec![r * w * c, -r * w * s, *climb_rate]),
                u0: DVector::from_vec(vec![-r * w * w * s, -r * w * w * c, 0.0]),
                u0_dot: DVector::from_vec(vec![-r * w * w * w * c, r * w * w * w * s, 0.0]),
            }
        }
        LeaderTrajectory::ConstantAcceleration {
            position,
            velocity,
            acceleration,
        } => {
            let p = DVector::from_vec(position.clone());
            let v = DVector::from_vec(velocity.clone());
            let u = DVector::from_vec(acceleration.clone());
            LeaderSignal {
                p0: &p + &v * t + &u * (0.5 * t * t),
                v0: &v + &u * t,
                u0: u.clone(),
                u0_dot: DVector::zeros(u.len()),
            }
        }
        LeaderTrajectory::Polynomial { coefficients } => {
            let d = coefficients.first().map_or(0, |c| c.len());
            let mut derivs = [
                DVector::zeros(d),
                DVector::zeros(d),
                DVector::zeros(d),
                DVector::zeros(d),
            ];
            for (order, out) in derivs.iter_mut().enumerate() {
                for (k, coeff) in coefficients.iter().enumerate().skip(order) {
                    // d^order/dt^order of t^k is k!/(k-order)! * t^(k-order).
                    let factor: f64 = ((k - order + 1)..=k).map(|m| m as f64).product();
                    let term = factor * t.powi((k - order) as i32);
                    for (slot, c) in out.iter_mut().zip(coeff) {
                        *slot += c * term;
                    }
                }
            }
            let [p0, v0, u0, u0_dot] = derivs;
            LeaderSignal { p0, v0, u0, u0_dot }
        }
    }
}

/// Follower model: `(dp, dv) = (v, u)`.
pub fn double_integrator_deriv(s: &AgentState, u: &DVector<f64>) -> AgentState {
    AgentState {
        p: s.v.clone(),
        v: u.clone(),
    }
}

/// Classical fourth-order Runge-Kutta update of a flat state vector.
///
/// Every stage derivative is checked for finiteness; the first offending
/// component index is reported on failure.
pub fn rk4_step<E, F>(
    mut f: F,
    s: &DVector<f64>,
    t: f64,
    dt: f64,
) -> Result<DVector<f64>, E>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, E>,
    E: From<DynamicsError>,
{
    if !dt.is_finite() || dt <= 0.0 {
        return Err(DynamicsError::NonPositiveStep(dt).into());
    }
    let check = |k: DVector<f64>| -> Result<DVector<f64>, E> {
        match k.iter().position(|x| !x.is_finite()) {
            Some(index) => Err(DynamicsError::NonFiniteDerivative { index }.into()),
            None => Ok(k),
        }
    };
    let half = 0.5 * dt;
    let k1 = check(f(t, s)?)?;
    let k2 = check(f(t + half, &(s + &k1 * half))?)?;
    let k3 = check(f(t + half, &(s + &k2 * half))?)?;
    let k4 = check(f(t + dt, &(s + &k3 * dt))?)?;
    Ok(s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn planar_sine() -> LeaderTrajectory {
        LeaderTrajectory::PlanarSine {
            speed: 0.2,
            amplitude: 0.2,
            frequency: 0.5,
        }
    }

    fn helix() -> LeaderTrajectory {
        LeaderTrajectory::Helix {
            radius: 10.0,
            frequency: 0.5,
            climb_rate: 1.0,
            z_offset: 30.0,
        }
    }

    #[test]
    fn planar_sine_at_zero() {
        let s = leader_signal(&planar_sine(), 0.0);
        assert_eq!(s.p0.as_slice(), &[0.0, 0.0]);
        assert_eq!(s.v0.as_slice(), &[0.2, 0.1]);
        assert_eq!(s.u0.as_slice(), &[0.0, 0.0]);
        assert_eq!(s.u0_dot.as_slice(), &[0.0, -0.025]);
    }

    #[test]
    fn helix_at_zero() {
        let s = leader_signal(&helix(), 0.0);
        assert_eq!(s.p0.as_slice(), &[0.0, 10.0, 30.0]);
        assert_eq!(s.v0.as_slice(), &[5.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_acceleration_has_zero_jerk() {
        let traj = LeaderTrajectory::ConstantAcceleration {
            position: vec![1.0, 2.0],
            velocity: vec![0.5, -0.5],
            acceleration: vec![0.1, 0.2],
        };
        for &t in &[0.0, 0.7, 3.3, 12.0] {
            let s = leader_signal(&traj, t);
            assert_eq!(s.u0.as_slice(), &[0.1, 0.2]);
            assert_eq!(s.u0_dot.as_slice(), &[0.0, 0.0]);
        }
    }

    #[test]
    fn polynomial_matches_manual_derivatives() {
        // p(t) = (1, 0) + (0, 2) t + (3, 1) t^3
        let traj = LeaderTrajectory::Polynomial {
            coefficients: vec![
                vec![1.0, 0.0],
                vec![0.0, 2.0],
                vec![0.0, 0.0],
                vec![3.0, 1.0],
            ],
        };
        let t = 1.5;
        let s = leader_signal(&traj, t);
        assert_relative_eq!(s.p0[0], 1.0 + 3.0 * t.powi(3), max_relative = 1e-14);
        assert_relative_eq!(s.v0[1], 2.0 + 3.0 * t * t, max_relative = 1e-14);
        assert_relative_eq!(s.u0[0], 18.0 * t, max_relative = 1e-14);
        assert_relative_eq!(s.u0_dot[0], 18.0, max_relative = 1e-14);
    }

    #[test]
    fn derivatives_agree_with_finite_differences() {
        let h = 1e-5;
        for traj in [planar_sine(), helix()] {
            for &t in &[0.3, 1.7, 4.2] {
                let hi = leader_signal(&traj, t + h);
                let lo = leader_signal(&traj, t - h);
                let mid = leader_signal(&traj, t);
                let fd_v = (&hi.p0 - &lo.p0) / (2.0 * h);
                let fd_u = (&hi.v0 - &lo.v0) / (2.0 * h);
                let fd_j = (&hi.u0 - &lo.u0) / (2.0 * h);
                assert!((fd_v - &mid.v0).norm() / mid.v0.norm().max(1.0) < 1e-6);
                assert!((fd_u - &mid.u0).norm() / mid.u0.norm().max(1.0) < 1e-6);
                assert!((fd_j - &mid.u0_dot).norm() / mid.u0_dot.norm().max(1.0) < 1e-6);
            }
        }
    }

    #[test]
    fn double_integrator_equilibrium() {
        let s = AgentState::new(DVector::zeros(2), DVector::zeros(2));
        let d = double_integrator_deriv(&s, &DVector::zeros(2));
        assert_eq!(d.p, DVector::zeros(2));
        assert_eq!(d.v, DVector::zeros(2));
    }

    #[test]
    fn double_integrator_passes_through_inputs() {
        let s = AgentState::new(
            DVector::from_vec(vec![7.0, -2.0]),
            DVector::from_vec(vec![1.0, 2.0]),
        );
        let d = double_integrator_deriv(&s, &DVector::from_vec(vec![3.0, 4.0]));
        assert_eq!(d.p.as_slice(), &[1.0, 2.0]);
        assert_eq!(d.v.as_slice(), &[3.0, 4.0]);
    }

    #[test]
    fn rk4_is_identity_for_zero_field() {
        let s = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let out = rk4_step::<DynamicsError, _>(
            |_, y: &DVector<f64>| Ok(DVector::zeros(y.len())),
            &s,
            0.0,
            0.1,
        )
        .unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn rk4_matches_exponential_stage_polynomial() {
        let s = DVector::from_vec(vec![1.0]);
        let out =
            rk4_step::<DynamicsError, _>(|_, y: &DVector<f64>| Ok(y.clone()), &s, 0.0, 0.1)
                .unwrap();
        // Fourth-order Taylor polynomial of exp(0.1).
        assert_relative_eq!(out[0], 1.1051708333333333, max_relative = 1e-15);
    }

    #[test]
    fn rk4_is_exact_on_constant_input_double_integrator() {
        // State (p, v) in 1-D with constant acceleration.
        let u = 0.37;
        let mut y = DVector::from_vec(vec![1.0, -0.5]);
        let dt = 1e-3;
        let steps = 1000;
        for k in 0..steps {
            y = rk4_step::<DynamicsError, _>(
                |_, s: &DVector<f64>| Ok(DVector::from_vec(vec![s[1], u])),
                &y,
                k as f64 * dt,
                dt,
            )
            .unwrap();
            let t = (k + 1) as f64 * dt;
            let exact_p = 1.0 - 0.5 * t + 0.5 * u * t * t;
            let exact_v = -0.5 + u * t;
            assert!((y[0] - exact_p).abs() < 1e-12);
            assert!((y[1] - exact_v).abs() < 1e-12);
        }
    }

    #[test]
    fn rk4_reports_non_finite_component() {
        let s = DVector::from_vec(vec![1.0, 1.0]);
        let err = rk4_step::<DynamicsError, _>(
            |_, _| Ok(DVector::from_vec(vec![0.0, f64::NAN])),
            &s,
            0.0,
            0.1,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            DynamicsError::NonFiniteDerivative { index: 1 }
        ));
    }

    #[test]
    fn rk4_rejects_non_positive_step() {
        let s = DVector::from_vec(vec![1.0]);
        let err =
            rk4_step::<DynamicsError, _>(|_, y: &DVector<f64>| Ok(y.clone()), &s, 0.0, 0.0)
                .unwrap_err();
        assert!(matches!(err, DynamicsError::NonPositiveStep(_)));
    }
}
