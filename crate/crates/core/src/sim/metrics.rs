//! Summary metrics extracted from a finished run log.

use serde::Serialize;

use super::log::{JumpCheck, RunLog};

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub final_time: f64,
    /// Formation error magnitude per follower at the last logged step.
    pub final_delta_norms: Vec<f64>,
    pub max_final_delta: f64,
    pub v_threshold: f64,
    /// First logged time with `V` below the threshold, if any.
    pub time_to_v_threshold: Option<f64>,
    /// Accepted exchanges.
    pub exchange_count: usize,
    /// All proposals, accepted or not.
    pub proposal_count: usize,
    /// Trapezoid integral of the logged Lyapunov value.
    pub integral_v: f64,
    pub min_inter_agent_distance: f64,
    pub max_inter_agent_distance: f64,
    pub jump_checks: Vec<JumpCheck>,
    pub warnings: Vec<String>,
}

pub const DEFAULT_V_THRESHOLD: f64 = 1e-3;

pub fn compute_metrics(log: &RunLog, v_threshold: f64) -> Metrics {
    let final_delta_norms: Vec<f64> = log
        .steps
        .last()
        .map(|rec| rec.delta.iter().map(|d| d.norm()).collect())
        .unwrap_or_default();
    let max_final_delta = final_delta_norms.iter().copied().fold(0.0, f64::max);

    let time_to_v_threshold = log
        .steps
        .iter()
        .find(|rec| rec.v < v_threshold)
        .map(|rec| rec.t);

    let mut integral_v = 0.0;
    for pair in log.steps.windows(2) {
        integral_v += 0.5 * (pair[0].v + pair[1].v) * (pair[1].t - pair[0].t);
    }

    let mut min_dist = f64::INFINITY;
    let mut max_dist: f64 = 0.0;
    for rec in &log.steps {
        for i in 0..log.n {
            for j in (i + 1)..log.n {
                let dist = (&rec.states[i].p - &rec.states[j].p).norm();
                min_dist = min_dist.min(dist);
                max_dist = max_dist.max(dist);
            }
        }
    }
    if log.n < 2 {
        min_dist = 0.0;
    }

    Metrics {
        final_time: log.steps.last().map_or(0.0, |r| r.t),
        final_delta_norms,
        max_final_delta,
        v_threshold,
        time_to_v_threshold,
        exchange_count: log.accepted_events().count(),
        proposal_count: log.events.len(),
        integral_v,
        min_inter_agent_distance: min_dist,
        max_inter_agent_distance: max_dist,
        jump_checks: log.jump_checks.clone(),
        warnings: log.warnings.clone(),
    }
}
