use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::policy::{CombinedPolicy, Evaluation};
use crate::problem::{Action, Problem, Solution};

use super::{greedy_from, Phase, SearchError, SearchOutcome, Tracker};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgbsConfig {
    /// Beam width: survivors per level.
    pub beta: usize,
    /// Expansion factor: children kept per beam node before simulation.
    pub gamma: usize,
    /// Return the best rollout seen anywhere instead of the best terminal
    /// of the final beam.
    pub track_incumbent: bool,
}

impl Default for SgbsConfig {
    fn default() -> Self {
        Self { beta: 4, gamma: 4, track_incumbent: true }
    }
}

impl SgbsConfig {
    pub fn new(beta: usize, gamma: usize) -> Self {
        Self { beta, gamma, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.beta == 0 || self.gamma == 0 {
            return Err(SearchError::InvalidConfig(format!("beta and gamma must be >= 1, got ({}, {})", self.beta, self.gamma)));
        }
        Ok(())
    }
}

struct Node<S> {
    state: S,
    log_prob: f64,
    /// Index into the rollout store; `None` only for the root.
    rollout: Option<usize>,
    action: Option<Action>,
}

/// Simulation-guided beam search from the initial state.
pub fn sgbs<P: Problem>(
    problem: &P,
    policy: &CombinedPolicy,
    config: &SgbsConfig,
    budget: u64,
) -> Result<SearchOutcome, SearchError> {
    if budget == 0 {
        return Err(SearchError::NoBudget);
    }
    let mut tracker = Tracker::new(budget);
    let sol = sgbs_with_tracker(problem, policy, config, &mut tracker)?;
    let mut out = tracker.finish()?;
    out.solution = sol;
    Ok(out)
}

/// Runs one search charging `tracker`, which may already hold an incumbent
/// from an enclosing method. Returns this search's own answer: the best
/// rollout it simulated (tracking on) or the best final-beam terminal.
///
/// On budget exhaustion the tracker is flagged truncated and the best
/// rollout of this search is returned.
pub fn sgbs_with_tracker<P: Problem>(
    problem: &P,
    policy: &CombinedPolicy,
    config: &SgbsConfig,
    tracker: &mut Tracker,
) -> Result<Solution, SearchError> {
    config.validate()?;
    if tracker.remaining() == 0 {
        return Err(SearchError::NoBudget);
    }
    let mut ev = Evaluation::new();
    let mut rollouts: Vec<Solution> = Vec::new();
    let mut best: Option<usize> = None;
    let mut beam = vec![Node { state: problem.initial_state(), log_prob: 0.0, rollout: None, action: None }];

    while beam.iter().any(|n| !problem.is_terminal(&n.state)) {
        // Expansion
        let mut children = Vec::with_capacity(beam.len() * config.gamma);
        for node in &beam {
            if problem.is_terminal(&node.state) {
                children.push(Node { state: node.state.clone(), log_prob: node.log_prob, rollout: node.rollout, action: node.action });
                continue;
            }
            ev.evaluate(problem, policy, &node.state)?;
            let mut order: Vec<usize> = (0..ev.actions.len()).collect();
            order.sort_by(|&a, &b| ev.logits[b].total_cmp(&ev.logits[a]));
            for (rank, &k) in order.iter().take(config.gamma).enumerate() {
                let mut state = node.state.clone();
                let action = ev.actions[k];
                problem.step(&mut state, action);
                // the greedy rollout of the parent already passes through its
                // argmax child
                let rollout = if rank == 0 { node.rollout } else { None };
                children.push(Node { state, log_prob: node.log_prob + ev.log_probs[k], rollout, action: Some(action) });
            }
        }

        // Simulation
        let pending: Vec<usize> = children.iter().enumerate().filter(|(_, c)| c.rollout.is_none()).map(|(i, _)| i).collect();
        let affordable = pending.len().min(tracker.remaining() as usize);
        let fresh: Vec<Solution> = pending[..affordable]
            .par_iter()
            .map_init(Evaluation::new, |ev, &i| greedy_from(problem, policy, children[i].state.clone(), ev))
            .collect::<Result<_, _>>()?;
        for (&i, sol) in pending.iter().zip(fresh) {
            tracker.consume(&sol, Phase::Simulation);
            if best.map_or(true, |b| sol.reward > rollouts[b].reward) {
                best = Some(rollouts.len());
            }
            children[i].rollout = Some(rollouts.len());
            rollouts.push(sol);
        }
        if affordable < pending.len() {
            tracker.mark_truncated();
            return Ok(rollouts[best.expect("at least one rollout")].clone());
        }

        // Pruning
        let reward = |c: &Node<P::State>| rollouts[c.rollout.expect("simulated")].reward;
        let mut order: Vec<usize> = (0..children.len()).collect();
        order.sort_by(|&a, &b| {
            let (ca, cb) = (&children[a], &children[b]);
            reward(cb)
                .total_cmp(&reward(ca))
                .then(cb.log_prob.total_cmp(&ca.log_prob))
                .then(ca.action.cmp(&cb.action))
        });
        order.truncate(config.beta);
        let mut slots: Vec<Option<Node<P::State>>> = children.into_iter().map(Some).collect();
        beam = order.into_iter().map(|i| slots[i].take().expect("unique index")).collect();
    }

    if config.track_incumbent {
        return Ok(rollouts[best.expect("at least one rollout")].clone());
    }
    let final_best = beam
        .iter()
        .map(|n| &rollouts[n.rollout.expect("simulated")])
        .fold(None::<&Solution>, |acc, s| match acc {
            Some(b) if b.reward >= s.reward => Some(b),
            _ => Some(s),
        })
        .expect("non-empty beam");
    Ok(final_best.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyParams;
    use crate::problem::{brute_force_optimum, Instance, InstanceGenerator, ProblemKind};
    use crate::search::greedy_rollout;

    #[test]
    fn single_chain_is_greedy() {
        for kind in [ProblemKind::Tsp, ProblemKind::Cvrp, ProblemKind::Ffsp] {
            let gen = InstanceGenerator::new(kind, 9, 4);
            let policy = CombinedPolicy::base(PolicyParams::initial(kind));
            for i in 0..10 {
                let inst = gen.generate(i).unwrap();
                crate::with_problem!(&inst, p => {
                    let out = sgbs(p, &policy, &SgbsConfig::new(1, 1), 1000).unwrap();
                    let g = greedy_rollout(p, &policy, &p.initial_state()).unwrap();
                    assert_eq!(out.solution, g);
                    assert_eq!(out.trace.consumed, 1);
                });
            }
        }
    }

    #[test]
    fn exhaustive_tsp_is_optimal() {
        let gen = InstanceGenerator::new(ProblemKind::Tsp, 6, 8);
        let policy = CombinedPolicy::base(PolicyParams::initial(ProblemKind::Tsp));
        for i in 0..10 {
            let inst = gen.generate(i).unwrap();
            let opt = brute_force_optimum(&inst).unwrap();
            let Instance::Tsp(p) = &inst else { unreachable!() };
            for track in [true, false] {
                let cfg = SgbsConfig { beta: 120, gamma: 5, track_incumbent: track };
                let out = sgbs(p, &policy, &cfg, u64::MAX).unwrap();
                assert!((out.solution.reward - opt.reward).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rollout_count_per_level() {
        let Instance::Tsp(inst) = InstanceGenerator::new(ProblemKind::Tsp, 30, 1).generate(0).unwrap() else { unreachable!() };
        let policy = CombinedPolicy::base(PolicyParams::initial(ProblemKind::Tsp));
        let out = sgbs(&inst, &policy, &SgbsConfig::new(4, 4), u64::MAX).unwrap();
        // 4 at the root, 12 per level while 4+ children exist, then 8, 4, 0
        assert_eq!(out.trace.consumed, 4 + 25 * 12 + 8 + 4);
        assert!(!out.trace.truncated);
    }

    #[test]
    fn truncation_keeps_incumbent() {
        let Instance::Tsp(inst) = InstanceGenerator::new(ProblemKind::Tsp, 20, 1).generate(0).unwrap() else { unreachable!() };
        let policy = CombinedPolicy::base(PolicyParams::initial(ProblemKind::Tsp));
        let g = greedy_rollout(&inst, &policy, &inst.initial_state()).unwrap();
        let out = sgbs(&inst, &policy, &SgbsConfig::new(4, 4), 30).unwrap();
        assert!(out.trace.truncated);
        assert_eq!(out.trace.consumed, 30);
        assert!(out.solution.reward >= g.reward);
    }
}
