//! Distributed leader estimator: each follower runs a third-order observer
//! reconstructing the leader position, velocity and acceleration from its
//! control-graph neighbors, with direct leader terms only on flagged agents.
//! Also hosts the offline stability tooling (stacked system matrix, spectral
//! abscissa, Lyapunov equation solve) used by the analysis commands.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::dynamics::LeaderSignal;
use crate::graph::{ControlGraph, GraphMatrices};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("estimator gains must be strictly positive")]
    NonPositiveGain,
    #[error("gain count {gains} does not match follower count {followers}")]
    GainCountMismatch { gains: usize, followers: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("eigenvalue iteration did not converge")]
    EigenFailed,
    #[error("matrix is not stable (spectral abscissa {0})")]
    Unstable(f64),
    #[error("right-hand side must be symmetric positive definite")]
    NotSymmetricPositiveDefinite,
    #[error("Lyapunov system is singular")]
    SingularSystem,
}

/// Per-follower estimates of the leader position, velocity and acceleration.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub p_hat: Vec<DVector<f64>>,
    pub v_hat: Vec<DVector<f64>>,
    pub u_hat: Vec<DVector<f64>>,
}

impl EstimatorState {
    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            p_hat: vec![DVector::zeros(dim); n],
            v_hat: vec![DVector::zeros(dim); n],
            u_hat: vec![DVector::zeros(dim); n],
        }
    }

    pub fn n(&self) -> usize {
        self.p_hat.len()
    }

    pub fn dim(&self) -> usize {
        self.p_hat.first().map_or(0, |p| p.len())
    }
}

/// Per-follower observer gains, all strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorGains {
    gamma1: Vec<f64>,
    gamma2: Vec<f64>,
    gamma3: Vec<f64>,
}

impl EstimatorGains {
    pub fn new(
        gamma1: Vec<f64>,
        gamma2: Vec<f64>,
        gamma3: Vec<f64>,
    ) -> Result<Self, EstimatorError> {
        if gamma1.len() != gamma2.len() || gamma2.len() != gamma3.len() {
            return Err(EstimatorError::GainCountMismatch {
                gains: gamma2.len(),
                followers: gamma1.len(),
            });
        }
        if gamma1
            .iter()
            .chain(&gamma2)
            .chain(&gamma3)
            .any(|&g| !g.is_finite() || g <= 0.0)
        {
            return Err(EstimatorError::NonPositiveGain);
        }
        Ok(Self {
            gamma1,
            gamma2,
            gamma3,
        })
    }

    pub fn uniform(n: usize, g1: f64, g2: f64, g3: f64) -> Result<Self, EstimatorError> {
        Self::new(vec![g1; n], vec![g2; n], vec![g3; n])
    }

    pub fn n(&self) -> usize {
        self.gamma1.len()
    }

    pub fn gamma1(&self) -> &[f64] {
        &self.gamma1
    }

    pub fn gamma2(&self) -> &[f64] {
        &self.gamma2
    }

    pub fn gamma3(&self) -> &[f64] {
        &self.gamma3
    }

    /// Same gain structure with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, EstimatorError> {
        Self::new(
            self.gamma1.iter().map(|g| g * factor).collect(),
            self.gamma2.iter().map(|g| g * factor).collect(),
            self.gamma3.iter().map(|g| g * factor).collect(),
        )
    }
}

/// Per-follower estimation errors relative to the true leader signal.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationErrors {
    pub p_tilde: Vec<DVector<f64>>,
    pub v_tilde: Vec<DVector<f64>>,
    pub u_tilde: Vec<DVector<f64>>,
}

impl EstimationErrors {
    /// Stacks the errors into one vector ordered position block, velocity
    /// block, acceleration block, agents in order inside each block.
    pub fn stacked(&self) -> DVector<f64> {
        let n = self.p_tilde.len();
        let d = self.p_tilde.first().map_or(0, |p| p.len());
        let mut q = DVector::zeros(3 * n * d);
        for (block, rows) in [&self.p_tilde, &self.v_tilde, &self.u_tilde]
            .into_iter()
            .enumerate()
        {
            for (i, row) in rows.iter().enumerate() {
                q.rows_mut(block * n * d + i * d, d).copy_from(row);
            }
        }
        q
    }

    pub fn norm(&self) -> f64 {
        self.stacked().norm()
    }
}

/// Observer vector field: triple-integrator chain per follower with the
/// consensus-plus-leader injection entering the estimated acceleration.
/// Only followers with a leader flag read the true leader signal.
pub fn estimator_deriv(
    est: &EstimatorState,
    ctrl: &ControlGraph,
    leader: &LeaderSignal,
    gains: &EstimatorGains,
) -> EstimatorState {
    let n = est.n();
    let d = est.dim();
    let mut deriv = EstimatorState::zeros(n, d);
    for i in 1..=n {
        let idx = i - 1;
        let mut inj_p = DVector::zeros(d);
        let mut inj_v = DVector::zeros(d);
        let mut inj_u = DVector::zeros(d);
        for &j in ctrl.neighbors(i) {
            inj_p += &est.p_hat[idx] - &est.p_hat[j - 1];
            inj_v += &est.v_hat[idx] - &est.v_hat[j - 1];
            inj_u += &est.u_hat[idx] - &est.u_hat[j - 1];
        }
        if ctrl.has_leader_edge(i) {
            inj_p += &est.p_hat[idx] - &leader.p0;
            inj_v += &est.v_hat[idx] - &leader.v0;
            inj_u += &est.u_hat[idx] - &leader.u0;
        }
        deriv.p_hat[idx] = est.v_hat[idx].clone();
        deriv.v_hat[idx] = est.u_hat[idx].clone();
        deriv.u_hat[idx] = -inj_p * gains.gamma1[idx]
            - inj_v * gains.gamma2[idx]
            - inj_u * gains.gamma3[idx];
    }
    deriv
}

/// Componentwise difference between the estimates and the leader signal.
pub fn estimation_errors(est: &EstimatorState, leader: &LeaderSignal) -> EstimationErrors {
    EstimationErrors {
        p_tilde: est.p_hat.iter().map(|p| p - &leader.p0).collect(),
        v_tilde: est.v_hat.iter().map(|v| v - &leader.v0).collect(),
        u_tilde: est.u_hat.iter().map(|u| u - &leader.u0).collect(),
    }
}

/// System matrix of the stacked estimation-error dynamics: a 3x3 block
/// companion with identity super-diagonal blocks and gain-weighted copies
/// of `H` (lifted to dimension `d`) in the last block row.
pub fn build_a1(
    matrices: &GraphMatrices,
    gains: &EstimatorGains,
    d: usize,
) -> Result<DMatrix<f64>, EstimatorError> {
    let n = matrices.h.nrows();
    if matrices.h.ncols() != n {
        return Err(EstimatorError::NotSquare {
            rows: n,
            cols: matrices.h.ncols(),
        });
    }
    if gains.n() != n {
        return Err(EstimatorError::GainCountMismatch {
            gains: gains.n(),
            followers: n,
        });
    }
    let nd = n * d;
    let eye_d = DMatrix::identity(d, d);
    let mut a1 = DMatrix::zeros(3 * nd, 3 * nd);
    a1.view_mut((0, nd), (nd, nd))
        .copy_from(&DMatrix::identity(nd, nd));
    a1.view_mut((nd, 2 * nd), (nd, nd))
        .copy_from(&DMatrix::identity(nd, nd));
    for (block, gamma) in [&gains.gamma1, &gains.gamma2, &gains.gamma3]
        .into_iter()
        .enumerate()
    {
        let gamma_diag = DMatrix::from_diagonal(&DVector::from_vec(gamma.clone()));
        let weighted = (-(gamma_diag * &matrices.h)).kronecker(&eye_d);
        a1.view_mut((2 * nd, block * nd), (nd, nd)).copy_from(&weighted);
    }
    Ok(a1)
}

/// Largest real part over the eigenvalues of a square matrix.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64, EstimatorError> {
    if a.nrows() != a.ncols() {
        return Err(EstimatorError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let eigs = complex_eigenvalues(a)?;
    eigs.iter()
        .map(|e| e.re)
        .fold(None, |acc: Option<f64>, re| {
            Some(acc.map_or(re, |m| m.max(re)))
        })
        .ok_or(EstimatorError::EigenFailed)
}

pub fn complex_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>, EstimatorError> {
    // Machine-epsilon thresholds stall the QR sweep on matrices past a
    // hundred rows; 1e-13 converges and leaves eigenvalues accurate well
    // below the 1e-8 the analysis paths rely on.
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), 1e-13, 200_000)
        .ok_or(EstimatorError::EigenFailed)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Solves `A^T P + P A = -Q` for symmetric positive definite `P` through
/// the Kronecker-vectorized linear system. Intended for the analysis path
/// at desk-scale sizes only; cost grows with the square of the matrix size.
pub fn lyapunov_solve(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<DMatrix<f64>, EstimatorError> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(EstimatorError::NotSquare {
            rows: q.nrows(),
            cols: q.ncols(),
        });
    }
    let abscissa = spectral_abscissa(a)?;
    if abscissa >= 0.0 {
        return Err(EstimatorError::Unstable(abscissa));
    }
    let sym_tol = 1e-12 * q.norm().max(1.0);
    if (q - q.transpose()).norm() > sym_tol {
        return Err(EstimatorError::NotSymmetricPositiveDefinite);
    }
    let q_min = q
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if q_min <= 0.0 {
        return Err(EstimatorError::NotSymmetricPositiveDefinite);
    }

    // vec(A^T P) = (I (x) A^T) vec(P), vec(P A) = (A^T (x) I) vec(P).
    let at = a.transpose();
    let eye = DMatrix::identity(n, n);
    let system = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_column_slice((-q).as_slice());
    let lu = system.lu();
    let vec_p = lu.solve(&rhs).ok_or(EstimatorError::SingularSystem)?;
    let p = DMatrix::from_column_slice(n, n, vec_p.as_slice());
    let p = (&p + p.transpose()) * 0.5;

    let residual = (at * &p + &p * a + q).norm();
    if residual > 1e-8 * q.norm() {
        return Err(EstimatorError::SingularSystem);
    }
    let p_min = p
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if p_min <= 0.0 {
        return Err(EstimatorError::NotSymmetricPositiveDefinite);
    }
    Ok(p)
}
