//! Offline stability analysis for a scenario: spanning-tree verdict,
//! smallest eigenvalue of `H`, spectrum and abscissa of the stacked
//! estimator matrix, and the Lyapunov-equation residual at desk scale.

use nalgebra::DMatrix;
use serde::Serialize;

use super::scenario::ScenarioConfig;
use super::SimError;
use crate::estimator::{build_a1, complex_eigenvalues, lyapunov_solve, spectral_abscissa};
use crate::graph::{graph_matrices, has_spanning_tree};

/// Above this stacked dimension the Kronecker-vectorized Lyapunov solve is
/// skipped; its memory grows with the fourth power of the agent count.
pub const LYAPUNOV_SIZE_LIMIT: usize = 40;

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub scenario: String,
    pub followers: usize,
    pub dimension: usize,
    pub spanning_tree: bool,
    pub h_min_eigenvalue: f64,
    pub spectral_abscissa: f64,
    /// Eigenvalues of the stacked estimator matrix as `[re, im]` pairs,
    /// sorted by real part then imaginary part.
    pub a1_spectrum: Vec<[f64; 2]>,
    pub lyapunov_residual: Option<f64>,
    pub lyapunov_p_min_eigenvalue: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_skipped: Option<String>,
}

pub fn analyze(cfg: &ScenarioConfig) -> Result<AnalysisReport, SimError> {
    let ctrl = cfg.control_graph()?;
    let gains = cfg.estimator_gains()?;
    let matrices = graph_matrices(&ctrl);
    let spanning_tree = has_spanning_tree(&ctrl);
    let h_min_eigenvalue = matrices
        .h
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);

    let a1 = build_a1(&matrices, &gains, cfg.dimension)?;
    let abscissa = spectral_abscissa(&a1)?;
    let mut spectrum: Vec<[f64; 2]> = complex_eigenvalues(&a1)?
        .iter()
        .map(|e| [e.re, e.im])
        .collect();
    spectrum.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));

    let (lyapunov_residual, lyapunov_p_min_eigenvalue, lyapunov_skipped) =
        if a1.nrows() > LYAPUNOV_SIZE_LIMIT {
            (
                None,
                None,
                Some(format!(
                    "stacked dimension {} exceeds solver limit {}",
                    a1.nrows(),
                    LYAPUNOV_SIZE_LIMIT
                )),
            )
        } else if abscissa >= 0.0 {
            (
                None,
                None,
                Some(format!("matrix is not stable (abscissa {abscissa})")),
            )
        } else {
            let q = DMatrix::identity(a1.nrows(), a1.ncols());
            let p = lyapunov_solve(&a1, &q)?;
            let residual = (a1.transpose() * &p + &p * &a1 + &q).norm();
            let p_min = p
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            (Some(residual), Some(p_min), None)
        };

    Ok(AnalysisReport {
        scenario: cfg.name.clone(),
        followers: cfg.n(),
        dimension: cfg.dimension,
        spanning_tree,
        h_min_eigenvalue,
        spectral_abscissa: abscissa,
        a1_spectrum: spectrum,
        lyapunov_residual,
        lyapunov_p_min_eigenvalue,
        lyapunov_skipped,
    })
}
