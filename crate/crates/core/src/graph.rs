//! Communication and control graphs for the follower network.
//!
//! Two graphs coexist: the range-induced communication graph over the
//! followers (rebuilt from positions as agents move) and the control graph
//! actually used by the estimator and controller, which carries per-follower
//! neighbor sets plus leader-access flags and only changes through goal
//! exchanges. Followers are numbered `1..=n`; the leader is node `0` and
//! appears only through the leader flags.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph needs at least one follower")]
    Empty,
    #[error("communication range must be positive, got {0}")]
    NonPositiveRange(f64),
    #[error("non-finite coordinate in position of follower {0}")]
    NonFinitePosition(usize),
    #[error("follower {follower} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        follower: usize,
        got: usize,
        expected: usize,
    },
    #[error("follower id {0} out of range 1..={1}")]
    InvalidId(usize, usize),
    #[error("self loop on follower {0}")]
    SelfLoop(usize),
    #[error("asymmetric neighbor sets: {0} lists {1} but not vice versa")]
    Asymmetric(usize, usize),
    #[error("leader flag count {flags} does not match follower count {followers}")]
    FlagCountMismatch { flags: usize, followers: usize },
    #[error("exchange pair must name two distinct followers")]
    DegeneratePair,
    #[error("neighbor exchange produced an asymmetric graph")]
    ExchangeInternal,
}

/// Undirected range-induced graph over the followers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    neighbors: Vec<BTreeSet<usize>>,
}

impl CommGraph {
    /// Builds a communication graph from an explicit edge list over
    /// follower ids `1..=n`.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut neighbors = vec![BTreeSet::new(); n];
        for &(i, j) in edges {
            check_id(i, n)?;
            check_id(j, n)?;
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            neighbors[i - 1].insert(j);
            neighbors[j - 1].insert(i);
        }
        Ok(Self { neighbors })
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    /// Neighbor set of follower `i` (1-based).
    pub fn neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.neighbors[i - 1]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i - 1].contains(&j)
    }

    /// Sorted edge list with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (idx, set) in self.neighbors.iter().enumerate() {
            let i = idx + 1;
            for &j in set.iter().filter(|&&j| j > i) {
                out.push((i, j));
            }
        }
        out
    }
}

/// Builds the communication graph induced by pairwise distance: followers
/// `i` and `j` are linked when `|p_i - p_j| <= range`. The boundary case
/// counts as connected.
pub fn build_comm_graph(
    positions: &[DVector<f64>],
    range: f64,
) -> Result<CommGraph, GraphError> {
    if positions.is_empty() {
        return Err(GraphError::Empty);
    }
    if !range.is_finite() || range <= 0.0 {
        return Err(GraphError::NonPositiveRange(range));
    }
    let dim = positions[0].len();
    for (idx, p) in positions.iter().enumerate() {
        if p.len() != dim {
            return Err(GraphError::DimensionMismatch {
                follower: idx + 1,
                got: p.len(),
                expected: dim,
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(GraphError::NonFinitePosition(idx + 1));
        }
    }
    let n = positions.len();
    let mut neighbors = vec![BTreeSet::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if (&positions[i] - &positions[j]).norm() <= range {
                neighbors[i].insert(j + 1);
                neighbors[j].insert(i + 1);
            }
        }
    }
    Ok(CommGraph { neighbors })
}

/// Controller network: symmetric follower neighbor sets plus the flags
/// marking which followers receive the leader signal directly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlGraph {
    follower_neighbors: Vec<BTreeSet<usize>>,
    leader_flags: Vec<bool>,
}

impl ControlGraph {
    /// Validates symmetry, id ranges and the absence of self loops.
    pub fn new(
        follower_neighbors: Vec<BTreeSet<usize>>,
        leader_flags: Vec<bool>,
    ) -> Result<Self, GraphError> {
        let n = follower_neighbors.len();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        if leader_flags.len() != n {
            return Err(GraphError::FlagCountMismatch {
                flags: leader_flags.len(),
                followers: n,
            });
        }
        for (idx, set) in follower_neighbors.iter().enumerate() {
            let i = idx + 1;
            for &j in set {
                check_id(j, n)?;
                if j == i {
                    return Err(GraphError::SelfLoop(i));
                }
                if !follower_neighbors[j - 1].contains(&i) {
                    return Err(GraphError::Asymmetric(i, j));
                }
            }
        }
        Ok(Self {
            follower_neighbors,
            leader_flags,
        })
    }

    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize)],
        leader_flags: Vec<bool>,
    ) -> Result<Self, GraphError> {
        let comm = CommGraph::from_edges(n, edges)?;
        Self::new(comm.neighbors, leader_flags)
    }

    pub fn n(&self) -> usize {
        self.follower_neighbors.len()
    }

    /// Control neighbor set of follower `i` (1-based).
    pub fn neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.follower_neighbors[i - 1]
    }

    pub fn has_leader_edge(&self, i: usize) -> bool {
        self.leader_flags[i - 1]
    }

    pub fn leader_flags(&self) -> &[bool] {
        &self.leader_flags
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (idx, set) in self.follower_neighbors.iter().enumerate() {
            let i = idx + 1;
            for &j in set.iter().filter(|&&j| j > i) {
                out.push((i, j));
            }
        }
        out
    }

    /// True when every control edge also exists in the communication graph.
    pub fn is_subgraph_of(&self, comm: &CommGraph) -> bool {
        self.n() == comm.n()
            && self
                .follower_neighbors
                .iter()
                .enumerate()
                .all(|(idx, set)| set.iter().all(|j| comm.has_edge(idx + 1, *j)))
    }

    /// Relabels the graph by the transposition `a <-> b`: node `a` takes
    /// `b`'s adjacency and leader flag and vice versa. Exposed for
    /// cross-validation of [`exchange_neighbors`].
    pub fn relabeled_by_transposition(&self, a: usize, b: usize) -> ControlGraph {
        let n = self.n();
        let swap = |x: usize| {
            if x == a {
                b
            } else if x == b {
                a
            } else {
                x
            }
        };
        let mut neighbors = vec![BTreeSet::new(); n];
        let mut flags = vec![false; n];
        for i in 1..=n {
            let src = swap(i);
            neighbors[i - 1] = self.follower_neighbors[src - 1]
                .iter()
                .map(|&j| swap(j))
                .collect();
            flags[i - 1] = self.leader_flags[src - 1];
        }
        ControlGraph {
            follower_neighbors: neighbors,
            leader_flags: flags,
        }
    }
}

/// Matrix representations of a control graph: adjacency, Laplacian, leader
/// matrix and their sum `H = L_F + B`.
#[derive(Debug, Clone)]
pub struct GraphMatrices {
    pub adjacency: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
    pub leader: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

pub fn graph_matrices(ctrl: &ControlGraph) -> GraphMatrices {
    let n = ctrl.n();
    let mut adjacency = DMatrix::zeros(n, n);
    for i in 1..=n {
        for &j in ctrl.neighbors(i) {
            adjacency[(i - 1, j - 1)] = 1.0;
        }
    }
    let degrees: Vec<f64> = (0..n).map(|i| adjacency.row(i).sum()).collect();
    let laplacian = DMatrix::from_diagonal(&DVector::from_vec(degrees)) - &adjacency;
    let leader = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        ctrl.leader_flags().iter().map(|&b| if b { 1.0 } else { 0.0 }),
    ));
    let h = &laplacian + &leader;
    GraphMatrices {
        adjacency,
        laplacian,
        leader,
        h,
    }
}

/// True when every follower is reachable from the leader: breadth-first
/// search seeded by the leader-flagged followers, expanding along the
/// undirected follower edges.
pub fn has_spanning_tree(ctrl: &ControlGraph) -> bool {
    let n = ctrl.n();
    let mut visited = vec![false; n];
    let mut queue: Vec<usize> = (1..=n).filter(|&i| ctrl.has_leader_edge(i)).collect();
    for &i in &queue {
        visited[i - 1] = true;
    }
    while let Some(i) = queue.pop() {
        for &j in ctrl.neighbors(i) {
            if !visited[j - 1] {
                visited[j - 1] = true;
                queue.push(j);
            }
        }
    }
    visited.iter().all(|&v| v)
}

/// Checks the mutual-visibility condition required before agents `a` and
/// `b` may exchange neighbor sets: each one's control neighbors (other
/// than the partner) must be communication neighbors of the partner.
///
/// Both ids must be distinct followers of the shared graphs.
pub fn check_assumption6(comm: &CommGraph, ctrl: &ControlGraph, a: usize, b: usize) -> bool {
    assert!(a != b && a >= 1 && b >= 1 && a <= ctrl.n() && b <= ctrl.n());
    let fits = |x: usize, other: usize| {
        ctrl.neighbors(x)
            .iter()
            .filter(|&&m| m != other)
            .all(|m| comm.neighbors(other).contains(m))
    };
    fits(a, b) && fits(b, a)
}

/// Rewires the control graph for a goal exchange between `a` and `b`:
/// the two agents adopt each other's neighbor sets (keeping their mutual
/// edge if present), every third-party neighbor is updated to restore
/// symmetry, and the leader flags travel with the exchanged slots.
///
/// The result equals the original graph relabeled by the transposition
/// `a <-> b`, so applying the same exchange twice restores the input.
pub fn exchange_neighbors(
    ctrl: &ControlGraph,
    a: usize,
    b: usize,
) -> Result<ControlGraph, GraphError> {
    let n = ctrl.n();
    check_id(a, n)?;
    check_id(b, n)?;
    if a == b {
        return Err(GraphError::DegeneratePair);
    }

    let old_a = ctrl.neighbors(a).clone();
    let old_b = ctrl.neighbors(b).clone();

    let mut new_a: BTreeSet<usize> = old_b.clone();
    if new_a.remove(&a) {
        new_a.insert(b);
    }
    let mut new_b: BTreeSet<usize> = old_a.clone();
    if new_b.remove(&b) {
        new_b.insert(a);
    }

    let mut neighbors: Vec<BTreeSet<usize>> = (1..=n).map(|i| ctrl.neighbors(i).clone()).collect();
    neighbors[a - 1] = new_a;
    neighbors[b - 1] = new_b;

    // Third parties adjacent to either agent re-derive their membership
    // from the new bidirectional edges.
    let affected: BTreeSet<usize> = old_a
        .union(&old_b)
        .copied()
        .filter(|&m| m != a && m != b)
        .collect();
    for &m in &affected {
        let set = &mut neighbors[m - 1];
        set.remove(&a);
        set.remove(&b);
        if neighbors[a - 1].contains(&m) {
            neighbors[m - 1].insert(a);
        }
        if neighbors[b - 1].contains(&m) {
            neighbors[m - 1].insert(b);
        }
    }

    let mut flags = ctrl.leader_flags().to_vec();
    flags.swap(a - 1, b - 1);

    ControlGraph::new(neighbors, flags).map_err(|_| GraphError::ExchangeInternal)
}

fn check_id(i: usize, n: usize) -> Result<(), GraphError> {
    if i == 0 || i > n {
        return Err(GraphError::InvalidId(i, n));
    }
    Ok(())
}
