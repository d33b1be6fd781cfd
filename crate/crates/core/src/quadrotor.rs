//! Simplified quadrotor plant and its cascaded control: the translational
//! channel is flown through virtual accelerations inverted into desired
//! attitude and total thrust, while a sliding-mode law tracks the resulting
//! attitude references produced by a second-order reference filter.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::GoalMap;
use crate::controller::{self, ControlGains};
use crate::dynamics::AgentState;
use crate::estimator::EstimatorState;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("physical parameters must be positive")]
    NonPositiveParameter,
    #[error("attitude gains must be positive")]
    NonPositiveGain,
    #[error("vertical command {0} cancels gravity; attitude inversion undefined")]
    ThrustSingularity(f64),
}

/// Physical quadrotor parameters; the coupling and input coefficients are
/// derived on demand so they can never go stale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadParams {
    pub mass: f64,
    pub gravity: f64,
    pub ixx: f64,
    pub iyy: f64,
    pub izz: f64,
    pub arm: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self {
            mass: 0.486,
            gravity: 9.81,
            ixx: 3.827e-3,
            iyy: 3.827e-3,
            izz: 7.6566e-3,
            arm: 0.1,
        }
    }
}

impl QuadParams {
    pub fn validate(&self) -> Result<(), QuadError> {
        let all = [
            self.mass,
            self.gravity,
            self.ixx,
            self.iyy,
            self.izz,
            self.arm,
        ];
        if all.iter().any(|&v| !v.is_finite() || v <= 0.0) {
            return Err(QuadError::NonPositiveParameter);
        }
        Ok(())
    }

    pub fn a1(&self) -> f64 {
        (self.iyy - self.izz) / self.ixx
    }

    pub fn a2(&self) -> f64 {
        (self.izz - self.ixx) / self.iyy
    }

    pub fn a3(&self) -> f64 {
        (self.ixx - self.iyy) / self.izz
    }

    pub fn b1(&self) -> f64 {
        self.arm / self.ixx
    }

    pub fn b2(&self) -> f64 {
        self.arm / self.iyy
    }

    pub fn b3(&self) -> f64 {
        1.0 / self.izz
    }
}

/// Twelve-state rigid body: position, velocity, Euler angles, body rates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub phi_rate: f64,
    pub theta_rate: f64,
    pub psi_rate: f64,
}

impl QuadState {
    pub fn to_array(self) -> [f64; 12] {
        [
            self.x,
            self.y,
            self.z,
            self.vx,
            self.vy,
            self.vz,
            self.phi,
            self.theta,
            self.psi,
            self.phi_rate,
            self.theta_rate,
            self.psi_rate,
        ]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            x: s[0],
            y: s[1],
            z: s[2],
            vx: s[3],
            vy: s[4],
            vz: s[5],
            phi: s[6],
            theta: s[7],
            psi: s[8],
            phi_rate: s[9],
            theta_rate: s[10],
            psi_rate: s[11],
        }
    }

    /// Translational slice viewed as a double-integrator agent state.
    pub fn translational(&self) -> AgentState {
        AgentState::new(
            DVector::from_vec(vec![self.x, self.y, self.z]),
            DVector::from_vec(vec![self.vx, self.vy, self.vz]),
        )
    }
}

/// Thrust and three moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadInputs {
    pub u_phi: f64,
    pub u_theta: f64,
    pub u_psi: f64,
    pub u_z: f64,
}

/// Per-axis sliding-mode gains plus the boundary-layer width used by the
/// saturation that replaces the discontinuous switching term.
#[derive(Debug, Clone, PartialEq)]
pub struct AttitudeGains {
    pub lambda_phi: f64,
    pub lambda_theta: f64,
    pub lambda_psi: f64,
    pub k_phi: f64,
    pub k_theta: f64,
    pub k_psi: f64,
    pub boundary_layer: f64,
}

impl AttitudeGains {
    pub fn uniform(lambda: f64, k: f64, boundary_layer: f64) -> Result<Self, QuadError> {
        let g = Self {
            lambda_phi: lambda,
            lambda_theta: lambda,
            lambda_psi: lambda,
            k_phi: k,
            k_theta: k,
            k_psi: k,
            boundary_layer,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), QuadError> {
        let all = [
            self.lambda_phi,
            self.lambda_theta,
            self.lambda_psi,
            self.k_phi,
            self.k_theta,
            self.k_psi,
            self.boundary_layer,
        ];
        if all.iter().any(|&v| !v.is_finite() || v <= 0.0) {
            return Err(QuadError::NonPositiveGain);
        }
        Ok(())
    }
}

/// Switching term of the sliding law: boundary-layer saturation by
/// default, pure sign for fidelity runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchingLaw {
    Saturation,
    Sign,
}

impl SwitchingLaw {
    fn apply(self, s: f64, boundary_layer: f64) -> f64 {
        match self {
            SwitchingLaw::Saturation => (s / boundary_layer).clamp(-1.0, 1.0),
            SwitchingLaw::Sign => {
                if s > 0.0 {
                    1.0
                } else if s < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Translational accelerations produced by a given attitude and thrust.
/// Shared by the plant model and the inversion checks.
pub fn translational_accel(
    phi: f64,
    theta: f64,
    psi: f64,
    u_z: f64,
    params: &QuadParams,
) -> (f64, f64, f64) {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let (ss, cs) = psi.sin_cos();
    let ax = (cp * st * cs + sp * ss) * u_z / params.mass;
    let ay = (cp * st * ss - sp * cs) * u_z / params.mass;
    let az = -params.gravity + cp * ct * u_z / params.mass;
    (ax, ay, az)
}

/// Rigid-body vector field: trigonometric translational channel plus
/// gyroscopically coupled angular accelerations.
pub fn quad_deriv(s: &QuadState, u: &QuadInputs, params: &QuadParams) -> QuadState {
    let (ax, ay, az) = translational_accel(s.phi, s.theta, s.psi, u.u_z, params);
    QuadState {
        x: s.vx,
        y: s.vy,
        z: s.vz,
        vx: ax,
        vy: ay,
        vz: az,
        phi: s.phi_rate,
        theta: s.theta_rate,
        psi: s.psi_rate,
        phi_rate: params.a1() * s.theta_rate * s.psi_rate + params.b1() * u.u_phi,
        theta_rate: params.a2() * s.phi_rate * s.psi_rate + params.b2() * u.u_theta,
        psi_rate: params.a3() * s.phi_rate * s.theta_rate + params.b3() * u.u_psi,
    }
}

/// Inverts virtual accelerations into the roll and pitch targets that
/// realize them at the commanded yaw. Fails when the vertical command
/// cancels gravity.
pub fn desired_attitude(
    ux: f64,
    uy: f64,
    uz: f64,
    psi_d: f64,
    gravity: f64,
) -> Result<(f64, f64), QuadError> {
    let w = uz + gravity;
    if w.abs() < 1e-9 {
        return Err(QuadError::ThrustSingularity(uz));
    }
    let (ss, cs) = psi_d.sin_cos();
    let theta_d = ((cs * ux + ss * uy) / w).atan();
    let phi_d = (theta_d.cos() * (ss * ux - cs * uy) / w).atan();
    Ok((phi_d, theta_d))
}

/// Thrust magnitude realizing the virtual accelerations.
pub fn total_thrust(ux: f64, uy: f64, uz: f64, mass: f64, gravity: f64) -> f64 {
    mass * (ux * ux + uy * uy + (uz + gravity) * (uz + gravity)).sqrt()
}

/// Reference triplet (value, rate, acceleration) per attitude axis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AttitudeRefs {
    pub phi: (f64, f64, f64),
    pub theta: (f64, f64, f64),
    pub psi: (f64, f64, f64),
}

/// Sliding-mode moments tracking the attitude references. The sliding
/// variable per axis is the rate error plus the gain-weighted angle error,
/// which makes the closed loop collapse to pure switching dynamics.
pub fn sliding_attitude_control(
    s: &QuadState,
    refs: &AttitudeRefs,
    gains: &AttitudeGains,
    params: &QuadParams,
    law: SwitchingLaw,
) -> (f64, f64, f64) {
    let eps = gains.boundary_layer;
    let axis = |angle: f64,
                rate: f64,
                (r, r_dot, r_ddot): (f64, f64, f64),
                lambda: f64,
                k: f64,
                coupling: f64,
                input_gain: f64| {
        let surface = (rate - r_dot) + lambda * (angle - r);
        (-coupling - k * law.apply(surface, eps) - lambda * (rate - r_dot) + r_ddot)
            / input_gain
    };
    let u_phi = axis(
        s.phi,
        s.phi_rate,
        refs.phi,
        gains.lambda_phi,
        gains.k_phi,
        params.a1() * s.theta_rate * s.psi_rate,
        params.b1(),
    );
    let u_theta = axis(
        s.theta,
        s.theta_rate,
        refs.theta,
        gains.lambda_theta,
        gains.k_theta,
        params.a2() * s.phi_rate * s.psi_rate,
        params.b2(),
    );
    let u_psi = axis(
        s.psi,
        s.psi_rate,
        refs.psi,
        gains.lambda_psi,
        gains.k_psi,
        params.a3() * s.phi_rate * s.theta_rate,
        params.b3(),
    );
    (u_phi, u_theta, u_psi)
}

/// Critically damped second-order filter producing smooth roll and pitch
/// references with consistent first and second derivatives from the raw
/// inversion commands. Seeded at the vehicle's initial attitude so the
/// sliding variable starts on the surface.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AttitudeRefFilter {
    pub phi: f64,
    pub phi_rate: f64,
    pub theta: f64,
    pub theta_rate: f64,
}

impl AttitudeRefFilter {
    pub const NATURAL_FREQ: f64 = 50.0;
    pub const DAMPING: f64 = 1.0;

    pub fn from_state(s: &QuadState) -> Self {
        Self {
            phi: s.phi,
            phi_rate: s.phi_rate,
            theta: s.theta,
            theta_rate: s.theta_rate,
        }
    }

    pub fn accel(command: f64, value: f64, rate: f64) -> f64 {
        let wn = Self::NATURAL_FREQ;
        wn * wn * (command - value) - 2.0 * Self::DAMPING * wn * rate
    }
}

/// One quadrotor's full input vector plus the filter accelerations the
/// caller needs to advance the reference filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadLoopOutput {
    pub inputs: QuadInputs,
    pub raw_phi_cmd: f64,
    pub raw_theta_cmd: f64,
    pub filter_phi_accel: f64,
    pub filter_theta_accel: f64,
    pub virtual_input: (f64, f64, f64),
}

/// Composes the backstepping outer loop on the translational channel with
/// attitude inversion, thrust computation and the sliding inner loop for
/// the whole fleet. Yaw references are held at zero.
#[allow(clippy::too_many_arguments)]
pub fn quad_outer_loop(
    quads: &[QuadState],
    est: &EstimatorState,
    goals: &GoalMap,
    gains: &ControlGains,
    filters: &[AttitudeRefFilter],
    att_gains: &AttitudeGains,
    params: &QuadParams,
    law: SwitchingLaw,
) -> Result<Vec<QuadLoopOutput>, QuadError> {
    let states: Vec<AgentState> = quads.iter().map(|q| q.translational()).collect();
    let surfaces = controller::error_surfaces(&states, est, goals, gains);
    let mut out = Vec::with_capacity(quads.len());
    for (i, quad) in quads.iter().enumerate() {
        let zeta_dot = controller::virtual_control_rate(
            &surfaces.e1[i],
            &surfaces.e2[i],
            &est.u_hat[i],
            gains.k1()[i],
        );
        let u = controller::actual_control(
            &surfaces.e1[i],
            &surfaces.e2[i],
            &zeta_dot,
            gains.k2()[i],
        );
        let (ux, uy, uz) = (u[0], u[1], u[2]);
        let (phi_cmd, theta_cmd) = desired_attitude(ux, uy, uz, 0.0, params.gravity)?;
        let u_z = total_thrust(ux, uy, uz, params.mass, params.gravity);
        let filter = &filters[i];
        let phi_accel = AttitudeRefFilter::accel(phi_cmd, filter.phi, filter.phi_rate);
        let theta_accel =
            AttitudeRefFilter::accel(theta_cmd, filter.theta, filter.theta_rate);
        let refs = AttitudeRefs {
            phi: (filter.phi, filter.phi_rate, phi_accel),
            theta: (filter.theta, filter.theta_rate, theta_accel),
            psi: (0.0, 0.0, 0.0),
        };
        let (u_phi, u_theta, u_psi) =
            sliding_attitude_control(quad, &refs, att_gains, params, law);
        out.push(QuadLoopOutput {
            inputs: QuadInputs {
                u_phi,
                u_theta,
                u_psi,
                u_z,
            },
            raw_phi_cmd: phi_cmd,
            raw_theta_cmd: theta_cmd,
            filter_phi_accel: phi_accel,
            filter_theta_accel: theta_accel,
            virtual_input: (ux, uy, uz),
        });
    }
    Ok(out)
}
