//! Uniform entry point running any method under one candidate budget.

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eas::{active_search, eas, sgbs_eas, AdaptationRow, EasConfig};
use crate::policy::CombinedPolicy;
use crate::problem::{Problem, Solution};
use crate::search::{
    greedy_rollout, mcts_search, nlp_beam_search, sample_batch, sgbs, MctsConfig, Phase, SearchError, SearchTrace, SgbsConfig,
    Tracker,
};

/// Samples drawn per parallel batch by the pure sampling method.
const SAMPLING_CHUNK: u64 = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    Greedy,
    Sampling,
    /// Probability-ranked beam search; the width defaults to the budget.
    Beam {
        #[serde(default)]
        width: Option<usize>,
    },
    Mcts(MctsConfig),
    Sgbs(SgbsConfig),
    ActiveSearch(EasConfig),
    Eas(EasConfig),
    #[serde(rename = "sgbs+eas")]
    SgbsEas(EasConfig),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Greedy => "greedy",
            Method::Sampling => "sampling",
            Method::Beam { .. } => "beam",
            Method::Mcts(_) => "mcts",
            Method::Sgbs(_) => "sgbs",
            Method::ActiveSearch(_) => "active-search",
            Method::Eas(_) => "eas",
            Method::SgbsEas(_) => "sgbs+eas",
        }
    }

    /// Name with the parameters that distinguish variants, e.g. `sgbs(4,4)`.
    pub fn label(&self) -> String {
        match self {
            Method::Beam { width: Some(w) } => format!("beam({w})"),
            Method::Sgbs(c) => format!("sgbs({},{})", c.beta, c.gamma),
            Method::SgbsEas(c) => format!("sgbs({},{})+eas", c.sgbs.beta, c.sgbs.gamma),
            m => m.name().to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        match self {
            Method::Greedy | Method::Sampling => Ok(()),
            Method::Beam { width: Some(0) } => Err(SearchError::InvalidConfig("beam width must be >= 1".into())),
            Method::Beam { .. } => Ok(()),
            Method::Mcts(c) => c.validate(),
            Method::Sgbs(c) => c.validate(),
            Method::ActiveSearch(c) | Method::Eas(c) | Method::SgbsEas(c) => c.validate(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Method {
    type Err = SearchError;

    /// Parses a method name with default parameters.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "greedy" => Method::Greedy,
            "sampling" => Method::Sampling,
            "beam" => Method::Beam { width: None },
            "mcts" => Method::Mcts(MctsConfig::default()),
            "sgbs" => Method::Sgbs(SgbsConfig::default()),
            "active-search" => Method::ActiveSearch(EasConfig::default()),
            "eas" => Method::Eas(EasConfig::default()),
            "sgbs+eas" => Method::SgbsEas(EasConfig::default()),
            other => return Err(SearchError::InvalidConfig(format!("unknown method `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetReport {
    pub method: String,
    pub solution: Solution,
    pub trace: SearchTrace,
    /// Per-iteration rows of the adaptive methods.
    pub adaptation: Option<Vec<AdaptationRow>>,
}

/// Runs `method` from the initial state of `problem`, charging every
/// evaluated complete solution to a counter capped at `budget`. `seed` drives
/// sampling and adapter initialization.
pub fn run_with_budget<P: Problem>(
    method: &Method,
    policy: &CombinedPolicy,
    problem: &P,
    budget: u64,
    seed: u64,
) -> Result<BudgetReport, SearchError> {
    if budget == 0 {
        return Err(SearchError::NoBudget);
    }
    let report = |solution, trace, adaptation| BudgetReport { method: method.label(), solution, trace, adaptation };
    Ok(match method {
        Method::Greedy => {
            let mut t = Tracker::new(budget);
            t.consume(&greedy_rollout(problem, policy, &problem.initial_state())?, Phase::Greedy);
            let out = t.finish()?;
            report(out.solution, out.trace, None)
        }
        Method::Sampling => {
            let mut t = Tracker::new(budget);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s0 = problem.initial_state();
            while t.remaining() > 0 {
                let n = t.remaining().min(SAMPLING_CHUNK);
                let seeds: Vec<u64> = (0..n).map(|_| rng.next_u64()).collect();
                for s in sample_batch(problem, policy, &s0, &seeds)? {
                    t.consume(&s, Phase::Sample);
                }
            }
            let out = t.finish()?;
            report(out.solution, out.trace, None)
        }
        Method::Beam { width } => {
            let w = width.unwrap_or(usize::try_from(budget).unwrap_or(usize::MAX));
            let (out, _) = nlp_beam_search(problem, policy, w, budget)?;
            report(out.solution, out.trace, None)
        }
        Method::Mcts(cfg) => {
            let out = mcts_search(problem, policy, cfg, budget)?;
            report(out.solution, out.trace, None)
        }
        Method::Sgbs(cfg) => {
            let out = sgbs(problem, policy, cfg, budget)?;
            report(out.solution, out.trace, None)
        }
        Method::ActiveSearch(cfg) => {
            let out = active_search(problem, policy, cfg, budget, seed)?;
            report(out.solution, out.trace, Some(out.rows))
        }
        Method::Eas(cfg) => {
            let out = eas(problem, policy, cfg, budget, seed)?;
            report(out.solution, out.trace, Some(out.rows))
        }
        Method::SgbsEas(cfg) => {
            let out = sgbs_eas(problem, policy, cfg, budget, seed)?;
            report(out.solution, out.trace, Some(out.rows))
        }
    })
}
