//! Inference procedures over a fixed policy snapshot.
//!
//! Every complete solution that a procedure evaluates costs one unit of the
//! candidate budget. A [`Tracker`] owns the counter and the incumbent, so
//! methods composed from several procedures share both.

mod beam;
mod mcts;
mod rollout;
mod sgbs;

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::PolicyError;
use crate::problem::{ProblemError, Solution};

pub use beam::nlp_beam_search;
pub use mcts::{mcts_search, mcts_search_with_stats, puct_u, MctsConfig, MctsDepthStat, MctsOutcome};
pub use rollout::{greedy_rollout, sample_rollouts, trajectory_log_prob};
pub use sgbs::{sgbs, sgbs_with_tracker, SgbsConfig};

pub(crate) use rollout::{greedy_from, sample_batch};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("budget of zero candidate solutions")]
    NoBudget,
    #[error("diverged: {0}")]
    Diverged(String),
    #[error("incumbent cannot be replayed: {0}")]
    CorruptIncumbent(ProblemError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

impl From<ProblemError> for SearchError {
    fn from(e: ProblemError) -> Self {
        SearchError::Policy(PolicyError::Problem(e))
    }
}

/// Which part of a method produced a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Greedy,
    Sample,
    Beam,
    Simulation,
    Mcts,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Greedy => "greedy",
            Phase::Sample => "sample",
            Phase::Beam => "beam",
            Phase::Simulation => "simulation",
            Phase::Mcts => "mcts",
        })
    }
}

/// One incumbent improvement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub candidates: u64,
    pub reward: f64,
    pub wall_nanos: u64,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub budget: u64,
    pub consumed: u64,
    pub truncated: bool,
    /// Incumbent history, strictly improving.
    pub history: Vec<TracePoint>,
}

impl SearchTrace {
    pub const CSV_HEADER: &'static str = "candidate_count,incumbent_cost,wall_nanos,phase";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for p in &self.history {
            out += &format!("{},{},{},{}\n", p.candidates, -p.reward, p.wall_nanos, p.phase);
        }
        out
    }

    /// `(candidate_count, incumbent_cost)` pairs without timing.
    pub fn cost_curve(&self) -> Vec<(u64, f64)> {
        self.history.iter().map(|p| (p.candidates, -p.reward)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub solution: Solution,
    pub trace: SearchTrace,
}

/// Shared candidate counter and incumbent.
#[derive(Debug, Clone)]
pub struct Tracker {
    budget: u64,
    consumed: u64,
    truncated: bool,
    best: Option<Solution>,
    history: Vec<TracePoint>,
    start: Instant,
}

impl Tracker {
    pub fn new(budget: u64) -> Self {
        Self { budget, consumed: 0, truncated: false, best: None, history: Vec::new(), start: Instant::now() }
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    pub fn remaining(&self) -> u64 {
        self.budget - self.consumed
    }

    pub fn best(&self) -> Option<&Solution> {
        self.best.as_ref()
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn mark_truncated(&mut self) {
        self.truncated = true;
    }

    /// Charges one unit for `solution`. Returns whether it became the
    /// incumbent (ties keep the older one).
    ///
    /// # Panics
    /// If the budget is already spent; callers check [`Tracker::remaining`].
    pub fn consume(&mut self, solution: &Solution, phase: Phase) -> bool {
        assert!(self.consumed < self.budget, "candidate budget overrun");
        self.consumed += 1;
        let better = self.best.as_ref().map_or(true, |b| solution.reward > b.reward);
        if better {
            self.best = Some(solution.clone());
            self.history.push(TracePoint {
                candidates: self.consumed,
                reward: solution.reward,
                wall_nanos: self.start.elapsed().as_nanos() as u64,
                phase,
            });
        }
        better
    }

    pub fn trace(&self) -> SearchTrace {
        SearchTrace { budget: self.budget, consumed: self.consumed, truncated: self.truncated, history: self.history.clone() }
    }

    pub fn finish(self) -> Result<SearchOutcome, SearchError> {
        let trace = SearchTrace { budget: self.budget, consumed: self.consumed, truncated: self.truncated, history: self.history };
        let solution = self.best.ok_or(SearchError::NoBudget)?;
        Ok(SearchOutcome { solution, trace })
    }
}
