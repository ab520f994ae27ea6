use crate::policy::{CombinedPolicy, Evaluation};
use crate::problem::Problem;

use super::{Phase, SearchError, SearchOutcome, Tracker};

struct Node<S> {
    state: S,
    log_prob: f64,
}

/// Classic beam search ranked by cumulative log-probability.
///
/// Each surviving partial solution is expanded into all of its children and
/// the `width` most probable are kept; finished ones stay in the beam with a
/// frozen score. The final terminals are then scored, one budget unit each.
/// Returns the best of them together with its cumulative log-probability.
pub fn nlp_beam_search<P: Problem>(
    problem: &P,
    policy: &CombinedPolicy,
    width: usize,
    budget: u64,
) -> Result<(SearchOutcome, f64), SearchError> {
    if width == 0 {
        return Err(SearchError::InvalidConfig("beam width must be at least 1".into()));
    }
    if budget == 0 {
        return Err(SearchError::NoBudget);
    }
    let mut ev = Evaluation::new();
    let mut beam = vec![Node { state: problem.initial_state(), log_prob: 0.0 }];
    while beam.iter().any(|n| !problem.is_terminal(&n.state)) {
        // (parent, child action or carry-over, score)
        let mut cands = Vec::new();
        for (i, node) in beam.iter().enumerate() {
            if problem.is_terminal(&node.state) {
                cands.push((i, None, node.log_prob));
                continue;
            }
            ev.evaluate(problem, policy, &node.state)?;
            let mut order: Vec<usize> = (0..ev.actions.len()).collect();
            order.sort_by(|&a, &b| ev.logits[b].total_cmp(&ev.logits[a]));
            for k in order {
                cands.push((i, Some(ev.actions[k]), node.log_prob + ev.log_probs[k]));
            }
        }
        cands.sort_by(|a, b| b.2.total_cmp(&a.2));
        cands.truncate(width);
        beam = cands
            .into_iter()
            .map(|(i, action, log_prob)| {
                let mut state = beam[i].state.clone();
                if let Some(a) = action {
                    problem.step(&mut state, a);
                }
                Node { state, log_prob }
            })
            .collect();
    }

    let mut tracker = Tracker::new(budget);
    let mut best: Option<(f64, f64)> = None;
    for node in &beam {
        if tracker.remaining() == 0 {
            tracker.mark_truncated();
            break;
        }
        let sol = problem.solution(&node.state);
        if best.map_or(true, |(r, _)| sol.reward > r) {
            best = Some((sol.reward, node.log_prob));
        }
        tracker.consume(&sol, Phase::Beam);
    }
    let log_prob = best.map(|b| b.1).unwrap_or(f64::NEG_INFINITY);
    Ok((tracker.finish()?, log_prob))
}
