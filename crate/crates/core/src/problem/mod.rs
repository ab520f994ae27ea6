//! Problem adapters for step-by-step solution construction.
//!
//! Every problem is described as a finite decision sequence: starting from an
//! empty action tuple, feasible actions are appended until the state becomes
//! terminal. The reward is a pure function of the instance and the complete
//! action tuple, with larger being better (costs are negated).

mod augment;
mod cvrp;
mod ffsp;
mod format;
mod generator;
mod oracle;
mod tsp;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use augment::{augment_x8, transform_point, AUGMENTATIONS};
pub use cvrp::{CvrpInstance, CvrpState, DEPOT};
pub use ffsp::{FfspInstance, FfspState, Stage};
pub use format::{parse_batch, parse_instance, read_batch, serialize_batch, serialize_instance, write_batch, ParseError};
pub use generator::{GeneratorParams, InstanceGenerator};
pub use oracle::{brute_force_optimum, held_karp, OracleError};
pub use tsp::{TspInstance, TspState};

/// Reward assigned to infeasible solutions. It is the most negative finite
/// `f64` so rewards stay totally ordered.
pub const INFEASIBLE_REWARD: f64 = f64::MIN;

/// A decision taken at one construction step.
///
/// TSP: node index. CVRP: node index with 0 for the depot. FFSP: job index, or
/// `num_jobs` for the no-op token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(pub usize);

impl Action {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ProblemKind {
    Tsp,
    Cvrp,
    Ffsp,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Tsp => "TSP",
            ProblemKind::Cvrp => "CVRP",
            ProblemKind::Ffsp => "FFSP",
        })
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "TSP" => Ok(ProblemKind::Tsp),
            "CVRP" => Ok(ProblemKind::Cvrp),
            "FFSP" => Ok(ProblemKind::Ffsp),
            other => Err(ProblemError::InvalidInstance(format!("unknown problem kind `{other}`"))),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("state is terminal, no actions are available")]
    TerminalState,
    #[error("action {action} is not feasible at depth {depth}")]
    InfeasibleAction { action: Action, depth: usize },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid generator parameters: {0}")]
    InvalidParameters(String),
    #[error("operation not supported for {0}")]
    Unsupported(ProblemKind),
}

/// A complete action tuple together with its reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub actions: Vec<Action>,
    pub reward: f64,
}

impl Solution {
    pub fn cost(&self) -> f64 {
        -self.reward
    }

    pub fn is_feasible(&self) -> bool {
        self.reward > INFEASIBLE_REWARD
    }
}

/// Partial solution. `assigned` is the action prefix `(a_0, .., a_{d-1})`.
pub trait ProblemState: Clone + Send + Sync + fmt::Debug {
    fn assigned(&self) -> &[Action];

    fn depth(&self) -> usize {
        self.assigned().len()
    }
}

/// A constructive combinatorial optimization problem instance.
///
/// Implementations are immutable and can be shared between worker threads.
pub trait Problem: Send + Sync {
    type State: ProblemState;

    fn kind(&self) -> ProblemKind;

    /// Length of the per-(state, action) feature vector consumed by the policy.
    fn feature_len(&self) -> usize;

    fn initial_state(&self) -> Self::State;

    fn is_terminal(&self, state: &Self::State) -> bool;

    /// Cheap membership test for `feasible_actions(state)`.
    fn is_feasible(&self, state: &Self::State, action: Action) -> bool;

    /// Feasible actions in ascending index order. Never empty for a
    /// non-terminal state.
    fn feasible_actions(&self, state: &Self::State) -> Result<Vec<Action>, ProblemError>;

    /// Applies `action` in place. The caller guarantees feasibility.
    fn step(&self, state: &mut Self::State, action: Action);

    /// Writes the feature vector of `action` at `state` into `out`.
    fn features(&self, state: &Self::State, action: Action, out: &mut [f64]);

    /// Reward of a complete action tuple; infeasible tuples map to
    /// [`INFEASIBLE_REWARD`].
    fn reward(&self, actions: &[Action]) -> f64;

    fn apply_action(&self, state: &Self::State, action: Action) -> Result<Self::State, ProblemError> {
        if self.is_terminal(state) || !self.is_feasible(state, action) {
            return Err(ProblemError::InfeasibleAction { action, depth: state.depth() });
        }
        let mut next = state.clone();
        self.step(&mut next, action);
        Ok(next)
    }

    /// Folds `apply_action` over `actions` starting from the initial state.
    fn replay(&self, actions: &[Action]) -> Result<Self::State, ProblemError> {
        let mut state = self.initial_state();
        for (depth, &action) in actions.iter().enumerate() {
            if self.is_terminal(&state) || !self.is_feasible(&state, action) {
                return Err(ProblemError::InfeasibleAction { action, depth });
            }
            self.step(&mut state, action);
        }
        Ok(state)
    }

    /// Packages a terminal state as a scored solution.
    fn solution(&self, state: &Self::State) -> Solution {
        let actions = state.assigned().to_vec();
        let reward = self.reward(&actions);
        Solution { actions, reward }
    }
}

/// Any supported instance, used for file IO and CLI dispatch.
#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Tsp(TspInstance),
    Cvrp(CvrpInstance),
    Ffsp(FfspInstance),
}

impl Instance {
    pub fn kind(&self) -> ProblemKind {
        match self {
            Instance::Tsp(_) => ProblemKind::Tsp,
            Instance::Cvrp(_) => ProblemKind::Cvrp,
            Instance::Ffsp(_) => ProblemKind::Ffsp,
        }
    }

    /// Problem size: nodes, customers, or jobs.
    pub fn size(&self) -> usize {
        match self {
            Instance::Tsp(i) => i.n(),
            Instance::Cvrp(i) => i.n(),
            Instance::Ffsp(i) => i.num_jobs(),
        }
    }

    pub fn reward(&self, actions: &[Action]) -> f64 {
        match self {
            Instance::Tsp(i) => i.reward(actions),
            Instance::Cvrp(i) => i.reward(actions),
            Instance::Ffsp(i) => i.reward(actions),
        }
    }
}

impl From<TspInstance> for Instance {
    fn from(i: TspInstance) -> Self {
        Instance::Tsp(i)
    }
}

impl From<CvrpInstance> for Instance {
    fn from(i: CvrpInstance) -> Self {
        Instance::Cvrp(i)
    }
}

impl From<FfspInstance> for Instance {
    fn from(i: FfspInstance) -> Self {
        Instance::Ffsp(i)
    }
}

/// Runs `$body` with `$p` bound to the concrete problem inside an [`Instance`].
#[macro_export]
macro_rules! with_problem {
    ($instance:expr, $p:ident => $body:expr) => {
        match $instance {
            $crate::problem::Instance::Tsp($p) => $body,
            $crate::problem::Instance::Cvrp($p) => $body,
            $crate::problem::Instance::Ffsp($p) => $body,
        }
    };
}

#[inline]
pub(crate) fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

pub(crate) fn distance_matrix(points: &[[f64; 2]]) -> Vec<f64> {
    let n = points.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = euclid(points[i], points[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    dist
}

pub(crate) fn check_unit_square(p: [f64; 2]) -> bool {
    p.iter().all(|c| c.is_finite() && (0.0..=1.0).contains(c))
}
