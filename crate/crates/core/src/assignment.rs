//! Online distributed goal assignment: periodic pair proposals, the
//! mutual-visibility gate, compounded-error comparison under current and
//! swapped goals, and the atomic goal-plus-neighbor exchange.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::ControlGains;
use crate::dynamics::AgentState;
use crate::estimator::EstimatorState;
use crate::graph::{self, CommGraph, ControlGraph, GraphError};

#[derive(Debug, Error)]
pub enum AssignmentError {
    #[error("pair selection needs at least two followers, got {0}")]
    TooFewFollowers(usize),
    #[error("pair ({0}, {1}) out of range for {2} followers")]
    InvalidPair(usize, usize, usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Current goal of every follower plus the fixed initial list. Exchanges
/// are transpositions, so the current goals always form a permutation of
/// the initial ones.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalMap {
    goals: Vec<DVector<f64>>,
    initial_goals: Vec<DVector<f64>>,
}

impl GoalMap {
    pub fn new(initial_goals: Vec<DVector<f64>>) -> Self {
        Self {
            goals: initial_goals.clone(),
            initial_goals,
        }
    }

    pub fn n(&self) -> usize {
        self.goals.len()
    }

    /// Current goal of follower `i` (1-based).
    pub fn goal(&self, i: usize) -> &DVector<f64> {
        &self.goals[i - 1]
    }

    pub fn goals(&self) -> &[DVector<f64>] {
        &self.goals
    }

    pub fn initial_goals(&self) -> &[DVector<f64>] {
        &self.initial_goals
    }

    pub fn swapped(&self, a: usize, b: usize) -> Self {
        let mut out = self.clone();
        out.goals.swap(a - 1, b - 1);
        out
    }

    /// Exact check that the current goals are a rearrangement of the
    /// initial ones; swaps move vectors without touching their bits.
    pub fn is_permutation_of_initial(&self) -> bool {
        let mut remaining: Vec<&DVector<f64>> = self.initial_goals.iter().collect();
        for g in &self.goals {
            match remaining.iter().position(|r| *r == g) {
                Some(idx) => {
                    remaining.swap_remove(idx);
                }
                None => return false,
            }
        }
        remaining.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairPolicy {
    RoundRobin,
    SeededRandom,
}

/// When and how assignment proposals happen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentSchedule {
    /// Seconds between assignment instants; must be a positive multiple of
    /// the integration step so left limits land on grid points.
    pub period: f64,
    pub pair_policy: PairPolicy,
    #[serde(default)]
    pub seed: u64,
}

/// Outcome of one assignment instant, also the run-log event record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeEvent {
    #[serde(rename = "t")]
    pub tau: f64,
    pub alpha: usize,
    pub beta: usize,
    /// Compounded error under the current goals; absent when the
    /// mutual-visibility gate failed before errors were computed.
    pub e_cur: Option<f64>,
    /// Compounded error under the swapped goals; same caveat.
    pub e_new: Option<f64>,
    pub accepted: bool,
    pub reason: ExchangeReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExchangeReason {
    Accepted,
    NotImproving,
    Assumption6Failed,
}

/// Number of unordered pairs over `n` followers.
pub fn pair_count(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Lexicographic unranking of pair index `idx` into `(alpha, beta)` with
/// `alpha < beta`, ids 1-based.
fn unrank_pair(mut idx: usize, n: usize) -> (usize, usize) {
    let mut alpha = 1;
    loop {
        let row = n - alpha;
        if idx < row {
            return (alpha, alpha + 1 + idx);
        }
        idx -= row;
        alpha += 1;
    }
}

/// Selects the proposal pair for instant `k` (0-based). Round robin walks
/// the lexicographic pair order cyclically; the seeded policy draws a pair
/// uniformly with a generator derived from `(seed, k)`, so repeated runs
/// see identical sequences.
pub fn select_pair(
    schedule: &AssignmentSchedule,
    k: u64,
    n: usize,
) -> Result<(usize, usize), AssignmentError> {
    if n < 2 {
        return Err(AssignmentError::TooFewFollowers(n));
    }
    let count = pair_count(n);
    let idx = match schedule.pair_policy {
        PairPolicy::RoundRobin => (k % count as u64) as usize,
        PairPolicy::SeededRandom => {
            let stream = schedule
                .seed
                .wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut rng = ChaCha8Rng::seed_from_u64(stream);
            rng.random_range(0..count)
        }
    };
    Ok(unrank_pair(idx, n))
}

/// Sum of squared surface norms over one candidate pair.
pub fn compounded_error(
    e1_a: &DVector<f64>,
    e2_a: &DVector<f64>,
    e1_b: &DVector<f64>,
    e2_b: &DVector<f64>,
) -> f64 {
    e1_a.norm_squared() + e2_a.norm_squared() + e1_b.norm_squared() + e2_b.norm_squared()
}

/// Surfaces the candidate pair would have under the proposed goals. Each
/// agent keeps using its own leader estimate.
pub struct BreveErrors {
    pub e1_a: DVector<f64>,
    pub e2_a: DVector<f64>,
    pub e1_b: DVector<f64>,
    pub e2_b: DVector<f64>,
}

impl BreveErrors {
    pub fn compounded(&self) -> f64 {
        compounded_error(&self.e1_a, &self.e2_a, &self.e1_b, &self.e2_b)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn breve_errors(
    state_a: &AgentState,
    state_b: &AgentState,
    p_hat_a: &DVector<f64>,
    v_hat_a: &DVector<f64>,
    p_hat_b: &DVector<f64>,
    v_hat_b: &DVector<f64>,
    goal_a_new: &DVector<f64>,
    goal_b_new: &DVector<f64>,
    k1_a: f64,
    k1_b: f64,
) -> BreveErrors {
    let e1_a = &state_a.p - p_hat_a - goal_a_new;
    let zeta_a = v_hat_a - &e1_a * k1_a;
    let e2_a = &state_a.v - zeta_a;
    let e1_b = &state_b.p - p_hat_b - goal_b_new;
    let zeta_b = v_hat_b - &e1_b * k1_b;
    let e2_b = &state_b.v - zeta_b;
    BreveErrors {
        e1_a,
        e2_a,
        e1_b,
        e2_b,
    }
}

/// Result of one assignment instant: the (possibly unchanged) control
/// graph and goal map plus the event record. The two values are produced
/// together so the caller can apply them atomically.
#[derive(Debug, Clone)]
pub struct AssignmentOutcome {
    pub ctrl: ControlGraph,
    pub goals: GoalMap,
    pub event: ExchangeEvent,
}

/// Runs one proposal for the selected pair against the left-limit states
/// and estimates: gate on mutual visibility, compare compounded errors
/// under current and swapped goals, and on strict improvement apply the
/// goal swap together with the neighbor exchange.
#[allow(clippy::too_many_arguments)]
pub fn assignment_step(
    t_k: f64,
    comm: &CommGraph,
    ctrl: &ControlGraph,
    goals: &GoalMap,
    states: &[AgentState],
    est: &EstimatorState,
    gains: &ControlGains,
    pair: (usize, usize),
) -> Result<AssignmentOutcome, AssignmentError> {
    let (alpha, beta) = pair;
    let n = ctrl.n();
    if alpha == beta || alpha < 1 || beta < 1 || alpha > n || beta > n {
        return Err(AssignmentError::InvalidPair(alpha, beta, n));
    }

    let reject = |reason: ExchangeReason, e_cur: Option<f64>, e_new: Option<f64>| {
        AssignmentOutcome {
            ctrl: ctrl.clone(),
            goals: goals.clone(),
            event: ExchangeEvent {
                tau: t_k,
                alpha,
                beta,
                e_cur,
                e_new,
                accepted: false,
                reason,
            },
        }
    };

    if !graph::check_assumption6(comm, ctrl, alpha, beta) {
        return Ok(reject(ExchangeReason::Assumption6Failed, None, None));
    }

    let (ia, ib) = (alpha - 1, beta - 1);
    // Current surfaces of the pair: same formulas with the present goals,
    // evaluated on the left-limit state handed in by the caller.
    let current = breve_errors(
        &states[ia],
        &states[ib],
        &est.p_hat[ia],
        &est.v_hat[ia],
        &est.p_hat[ib],
        &est.v_hat[ib],
        goals.goal(alpha),
        goals.goal(beta),
        gains.k1()[ia],
        gains.k1()[ib],
    );
    let proposed = breve_errors(
        &states[ia],
        &states[ib],
        &est.p_hat[ia],
        &est.v_hat[ia],
        &est.p_hat[ib],
        &est.v_hat[ib],
        goals.goal(beta),
        goals.goal(alpha),
        gains.k1()[ia],
        gains.k1()[ib],
    );
    let e_cur = current.compounded();
    let e_new = proposed.compounded();

    if e_cur > e_new {
        let ctrl_new = graph::exchange_neighbors(ctrl, alpha, beta)?;
        Ok(AssignmentOutcome {
            ctrl: ctrl_new,
            goals: goals.swapped(alpha, beta),
            event: ExchangeEvent {
                tau: t_k,
                alpha,
                beta,
                e_cur: Some(e_cur),
                e_new: Some(e_new),
                accepted: true,
                reason: ExchangeReason::Accepted,
            },
        })
    } else {
        Ok(reject(
            ExchangeReason::NotImproving,
            Some(e_cur),
            Some(e_new),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_comm_graph;
    use nalgebra::dvector;

    fn schedule(policy: PairPolicy) -> AssignmentSchedule {
        AssignmentSchedule {
            period: 0.05,
            pair_policy: policy,
            seed: 7,
        }
    }

    #[test]
    fn round_robin_enumerates_lexicographically() {
        let s = schedule(PairPolicy::RoundRobin);
        let picks: Vec<_> = (0..4).map(|k| select_pair(&s, k, 3).unwrap()).collect();
        assert_eq!(picks, vec![(1, 2), (1, 3), (2, 3), (1, 2)]);
    }

    #[test]
    fn round_robin_covers_all_pairs_in_one_cycle() {
        let n = 5;
        let s = schedule(PairPolicy::RoundRobin);
        let mut seen = std::collections::BTreeSet::new();
        for k in 0..pair_count(n) as u64 {
            seen.insert(select_pair(&s, k, n).unwrap());
        }
        assert_eq!(seen.len(), pair_count(n));
    }

    #[test]
    fn seeded_policy_is_reproducible() {
        let s = schedule(PairPolicy::SeededRandom);
        let a: Vec<_> = (0..32).map(|k| select_pair(&s, k, 6).unwrap()).collect();
        let b: Vec<_> = (0..32).map(|k| select_pair(&s, k, 6).unwrap()).collect();
        assert_eq!(a, b);
        for &(alpha, beta) in &a {
            assert!(alpha >= 1 && alpha < beta && beta <= 6);
        }
    }

    #[test]
    fn pair_selection_needs_two_followers() {
        let s = schedule(PairPolicy::RoundRobin);
        assert!(matches!(
            select_pair(&s, 0, 1),
            Err(AssignmentError::TooFewFollowers(1))
        ));
    }

    #[test]
    fn compounded_error_cases() {
        let z = DVector::zeros(2);
        assert_eq!(compounded_error(&z, &z, &z, &z), 0.0);
        assert_eq!(compounded_error(&dvector![3.0, 4.0], &z, &z, &z), 25.0);
        let (a, b) = (dvector![1.0, 2.0], dvector![-0.5, 0.25]);
        assert_eq!(
            compounded_error(&a, &b, &z, &z),
            compounded_error(&z, &z, &a, &b)
        );
    }

    fn one_dim_pair() -> (Vec<AgentState>, EstimatorState, GoalMap, ControlGains) {
        let states = vec![
            AgentState::new(dvector![0.0], dvector![0.0]),
            AgentState::new(dvector![1.0], dvector![0.0]),
        ];
        let est = EstimatorState {
            p_hat: vec![dvector![0.0], dvector![0.0]],
            v_hat: vec![dvector![0.0], dvector![0.0]],
            u_hat: vec![dvector![0.0], dvector![0.0]],
        };
        let goals = GoalMap::new(vec![dvector![1.0], dvector![0.0]]);
        let gains = ControlGains::uniform(2, 1.0, 1.0).unwrap();
        (states, est, goals, gains)
    }

    #[test]
    fn swapping_equal_goals_reproduces_current_errors() {
        let (states, est, _, gains) = one_dim_pair();
        let goal = dvector![0.4];
        let current = breve_errors(
            &states[0], &states[1], &est.p_hat[0], &est.v_hat[0], &est.p_hat[1],
            &est.v_hat[1], &goal, &goal, gains.k1()[0], gains.k1()[1],
        );
        let swapped = breve_errors(
            &states[0], &states[1], &est.p_hat[0], &est.v_hat[0], &est.p_hat[1],
            &est.v_hat[1], &goal, &goal, gains.k1()[0], gains.k1()[1],
        );
        assert_eq!(current.compounded(), swapped.compounded());
    }

    #[test]
    fn perfect_swap_configuration_zeroes_proposed_errors() {
        let (states, est, goals, gains) = one_dim_pair();
        // Each agent sits exactly on the other's goal slot.
        let proposed = breve_errors(
            &states[0],
            &states[1],
            &est.p_hat[0],
            &est.v_hat[0],
            &est.p_hat[1],
            &est.v_hat[1],
            goals.goal(2),
            goals.goal(1),
            gains.k1()[0],
            gains.k1()[1],
        );
        assert_eq!(proposed.compounded(), 0.0);
        let current = breve_errors(
            &states[0],
            &states[1],
            &est.p_hat[0],
            &est.v_hat[0],
            &est.p_hat[1],
            &est.v_hat[1],
            goals.goal(1),
            goals.goal(2),
            gains.k1()[0],
            gains.k1()[1],
        );
        // Position errors of 1 each, doubled through the velocity surface.
        assert_eq!(current.compounded(), 4.0);
    }

    fn full_comm(n: usize) -> CommGraph {
        let positions: Vec<DVector<f64>> =
            (0..n).map(|i| dvector![0.1 * i as f64]).collect();
        build_comm_graph(&positions, 10.0).unwrap()
    }

    #[test]
    fn improving_swap_is_applied_atomically() {
        let (states, est, goals, gains) = one_dim_pair();
        let comm = full_comm(2);
        let ctrl = ControlGraph::from_edges(2, &[(1, 2)], vec![true, false]).unwrap();
        let out = assignment_step(
            0.25,
            &comm,
            &ctrl,
            &goals,
            &states,
            &est,
            &gains,
            (1, 2),
        )
        .unwrap();
        assert!(out.event.accepted);
        assert_eq!(out.event.reason, ExchangeReason::Accepted);
        assert_eq!(out.event.e_cur, Some(4.0));
        assert_eq!(out.event.e_new, Some(0.0));
        assert_eq!(out.goals.goal(1), &dvector![0.0]);
        assert_eq!(out.goals.goal(2), &dvector![1.0]);
        // Leader flag traveled with the exchanged slot.
        assert!(!out.ctrl.has_leader_edge(1));
        assert!(out.ctrl.has_leader_edge(2));
        assert!(out.goals.is_permutation_of_initial());
    }

    #[test]
    fn tie_is_rejected() {
        let states = vec![
            AgentState::new(dvector![0.5], dvector![0.0]),
            AgentState::new(dvector![0.5], dvector![0.0]),
        ];
        let est = EstimatorState::zeros(2, 1);
        let goals = GoalMap::new(vec![dvector![0.2], dvector![0.2]]);
        let gains = ControlGains::uniform(2, 1.0, 1.0).unwrap();
        let comm = full_comm(2);
        let ctrl = ControlGraph::from_edges(2, &[(1, 2)], vec![true, false]).unwrap();
        let out =
            assignment_step(0.1, &comm, &ctrl, &goals, &states, &est, &gains, (1, 2))
                .unwrap();
        assert!(!out.event.accepted);
        assert_eq!(out.event.reason, ExchangeReason::NotImproving);
        assert_eq!(out.ctrl, ctrl);
        assert_eq!(out.goals, goals);
    }

    #[test]
    fn failed_gate_leaves_state_untouched() {
        let (states, est, goals, _) = one_dim_pair();
        // Agent 1 depends on 3, which agent 2 cannot see.
        let comm = CommGraph::from_edges(3, &[(1, 2), (1, 3)]).unwrap();
        let ctrl =
            ControlGraph::from_edges(3, &[(1, 3)], vec![true, false, false]).unwrap();
        let states = vec![
            states[0].clone(),
            states[1].clone(),
            AgentState::new(dvector![2.0], dvector![0.0]),
        ];
        let est3 = EstimatorState {
            p_hat: vec![est.p_hat[0].clone(), est.p_hat[1].clone(), dvector![0.0]],
            v_hat: vec![est.v_hat[0].clone(), est.v_hat[1].clone(), dvector![0.0]],
            u_hat: vec![est.u_hat[0].clone(), est.u_hat[1].clone(), dvector![0.0]],
        };
        let goals3 = GoalMap::new(vec![
            goals.goal(1).clone(),
            goals.goal(2).clone(),
            dvector![2.0],
        ]);
        let gains3 = ControlGains::uniform(3, 1.0, 1.0).unwrap();
        let out = assignment_step(
            0.1, &comm, &ctrl, &goals3, &states, &est3, &gains3, (1, 2),
        )
        .unwrap();
        assert!(!out.event.accepted);
        assert_eq!(out.event.reason, ExchangeReason::Assumption6Failed);
        assert_eq!(out.event.e_cur, None);
        assert_eq!(out.event.e_new, None);
        assert_eq!(out.ctrl, ctrl);
        assert_eq!(out.goals, goals3);
    }

    #[test]
    fn event_serialization_uses_wire_names() {
        let event = ExchangeEvent {
            tau: 0.15,
            alpha: 4,
            beta: 5,
            e_cur: Some(2.0),
            e_new: Some(1.0),
            accepted: true,
            reason: ExchangeReason::Accepted,
        };
        let json = serde_json::to_string(&event).unwrap();
        assert!(json.contains("\"t\":0.15"));
        assert!(json.contains("\"reason\":\"accepted\""));
    }
}
