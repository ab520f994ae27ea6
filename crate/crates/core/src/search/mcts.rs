use serde::{Deserialize, Serialize};

use crate::policy::{CombinedPolicy, Evaluation};
use crate::problem::{Action, Problem};

use super::{greedy_from, Phase, SearchError, SearchOutcome, Tracker};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MctsConfig {
    pub c_puct: f64,
    /// Simulations run before each move commitment.
    pub simulations: usize,
    /// Added to the child visit count in the exploration denominator.
    pub offset: f64,
}

impl Default for MctsConfig {
    fn default() -> Self {
        Self { c_puct: 1.0, simulations: 12, offset: 0.1 }
    }
}

impl MctsConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if !(self.c_puct > 0.0 && self.offset > 0.0 && self.simulations > 0) {
            return Err(SearchError::InvalidConfig(format!("need c_puct > 0, offset > 0, simulations > 0: {self:?}")));
        }
        Ok(())
    }
}

/// Exploration bonus `c * P * sqrt(total) / (offset + visits)`.
pub fn puct_u(c_puct: f64, prior: f64, total_visits: u64, visits: u64, offset: f64) -> f64 {
    c_puct * prior * (total_visits as f64).sqrt() / (offset + visits as f64)
}

/// Bookkeeping of one committed move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MctsDepthStat {
    pub depth: usize,
    pub simulations: u64,
    /// Sum of root child visit counts when the move was committed.
    pub root_visits: u64,
    pub committed: Action,
    /// Raw mean child values at the root (visited children only).
    pub q_values: Vec<f64>,
    /// Smallest and largest rollout reward observed in this tree.
    pub reward_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MctsOutcome {
    pub outcome: SearchOutcome,
    pub stats: Vec<MctsDepthStat>,
}

struct Edge {
    action: Action,
    prior: f64,
    visits: u64,
    value_sum: f64,
    child: Option<usize>,
}

struct TreeNode<S> {
    state: S,
    edges: Vec<Edge>,
}

struct Tree<S> {
    nodes: Vec<TreeNode<S>>,
    min: f64,
    max: f64,
}

impl<S> Tree<S> {
    fn q(&self, e: &Edge) -> f64 {
        if e.visits == 0 || self.max <= self.min {
            return 0.0;
        }
        (e.value_sum / e.visits as f64 - self.min) / (self.max - self.min)
    }

    fn select(&self, node: usize, cfg: &MctsConfig) -> usize {
        let edges = &self.nodes[node].edges;
        let total: u64 = edges.iter().map(|e| e.visits).sum();
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, e) in edges.iter().enumerate() {
            let score = self.q(e) + puct_u(cfg.c_puct, e.prior, total, e.visits, cfg.offset);
            if score > best_score || (score == best_score && e.prior > edges[best].prior) {
                best = i;
                best_score = score;
            }
        }
        best
    }
}

fn expand<P: Problem>(problem: &P, policy: &CombinedPolicy, state: P::State, ev: &mut Evaluation) -> Result<TreeNode<P::State>, SearchError> {
    let edges = if problem.is_terminal(&state) {
        Vec::new()
    } else {
        ev.evaluate(problem, policy, &state)?;
        ev.actions
            .iter()
            .zip(&ev.probs)
            .map(|(&action, &prior)| Edge { action, prior, visits: 0, value_sum: 0.0, child: None })
            .collect()
    };
    Ok(TreeNode { state, edges })
}

/// Tree search with move commitment, see [`mcts_search_with_stats`].
pub fn mcts_search<P: Problem>(
    problem: &P,
    policy: &CombinedPolicy,
    config: &MctsConfig,
    budget: u64,
) -> Result<SearchOutcome, SearchError> {
    Ok(mcts_search_with_stats(problem, policy, config, budget)?.outcome)
}

/// At every depth a fresh tree is grown from the committed state with
/// `simulations` select/expand/rollout/backup passes, then the most visited
/// root child is committed. Each rollout costs one unit; the incumbent is
/// the best rollout seen. Moves with a single feasible action are committed
/// without simulating.
pub fn mcts_search_with_stats<P: Problem>(
    problem: &P,
    policy: &CombinedPolicy,
    config: &MctsConfig,
    budget: u64,
) -> Result<MctsOutcome, SearchError> {
    config.validate()?;
    if budget == 0 {
        return Err(SearchError::NoBudget);
    }
    let mut tracker = Tracker::new(budget);
    let mut ev = Evaluation::new();
    let mut stats = Vec::new();
    let mut current = problem.initial_state();

    'moves: while !problem.is_terminal(&current) {
        let depth = crate::problem::ProblemState::depth(&current);
        let root = expand(problem, policy, current.clone(), &mut ev)?;
        if root.edges.len() == 1 {
            problem.step(&mut current, root.edges[0].action);
            continue;
        }
        let mut tree = Tree { nodes: vec![root], min: f64::INFINITY, max: f64::NEG_INFINITY };
        let mut sims = 0;
        for _ in 0..config.simulations {
            if tracker.remaining() == 0 {
                tracker.mark_truncated();
                break 'moves;
            }
            let mut path = Vec::new();
            let mut node = 0;
            let reward = loop {
                let e = tree.select(node, config);
                path.push((node, e));
                match tree.nodes[node].edges[e].child {
                    Some(c) if tree.nodes[c].edges.is_empty() => {
                        let sol = problem.solution(&tree.nodes[c].state);
                        tracker.consume(&sol, Phase::Mcts);
                        break sol.reward;
                    }
                    Some(c) => node = c,
                    None => {
                        let mut state = tree.nodes[node].state.clone();
                        problem.step(&mut state, tree.nodes[node].edges[e].action);
                        let child = expand(problem, policy, state, &mut ev)?;
                        let sol = greedy_from(problem, policy, child.state.clone(), &mut ev)?;
                        tree.nodes.push(child);
                        let id = tree.nodes.len() - 1;
                        tree.nodes[node].edges[e].child = Some(id);
                        tracker.consume(&sol, Phase::Mcts);
                        break sol.reward;
                    }
                }
            };
            tree.min = tree.min.min(reward);
            tree.max = tree.max.max(reward);
            for (n, e) in path {
                let edge = &mut tree.nodes[n].edges[e];
                edge.visits += 1;
                edge.value_sum += reward;
            }
            sims += 1;
        }
        let edges = &tree.nodes[0].edges;
        let mut pick = 0;
        for (i, e) in edges.iter().enumerate() {
            let b = &edges[pick];
            if e.visits > b.visits || (e.visits == b.visits && e.prior > b.prior) {
                pick = i;
            }
        }
        stats.push(MctsDepthStat {
            depth,
            simulations: sims,
            root_visits: edges.iter().map(|e| e.visits).sum(),
            committed: edges[pick].action,
            q_values: edges.iter().filter(|e| e.visits > 0).map(|e| e.value_sum / e.visits as f64).collect(),
            reward_range: (tree.min, tree.max),
        });
        problem.step(&mut current, edges[pick].action);
    }

    if tracker.best().is_none() && tracker.remaining() > 0 && problem.is_terminal(&current) {
        tracker.consume(&problem.solution(&current), Phase::Mcts);
    }
    Ok(MctsOutcome { outcome: tracker.finish()?, stats })
}
