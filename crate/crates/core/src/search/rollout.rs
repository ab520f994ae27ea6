use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::policy::{argmax, CombinedPolicy, Evaluation, PolicyError};
use crate::problem::{Problem, Solution};

/// Completes `state` by always taking the highest-logit feasible action
/// (lowest index on ties). A terminal state is returned as is.
pub fn greedy_rollout<P: Problem>(problem: &P, policy: &CombinedPolicy, state: &P::State) -> Result<Solution, PolicyError> {
    greedy_from(problem, policy, state.clone(), &mut Evaluation::new())
}

pub(crate) fn greedy_from<P: Problem>(
    problem: &P,
    policy: &CombinedPolicy,
    mut state: P::State,
    ev: &mut Evaluation,
) -> Result<Solution, PolicyError> {
    while !problem.is_terminal(&state) {
        ev.logits(problem, policy, &state)?;
        let a = ev.actions[argmax(&ev.logits)];
        problem.step(&mut state, a);
    }
    Ok(problem.solution(&state))
}

fn sample_one<P: Problem>(
    problem: &P,
    policy: &CombinedPolicy,
    mut state: P::State,
    rng: &mut ChaCha8Rng,
    ev: &mut Evaluation,
) -> Result<Solution, PolicyError> {
    while !problem.is_terminal(&state) {
        ev.evaluate(problem, policy, &state)?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        // falls back to the last action with positive mass if rounding
        // leaves the cumulative sum just short of `u`
        let mut pick = ev.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        for (k, p) in ev.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = k;
                break;
            }
        }
        problem.step(&mut state, ev.actions[pick]);
    }
    Ok(problem.solution(&state))
}

/// One trajectory per seed. The result does not depend on the worker count.
pub(crate) fn sample_batch<P: Problem>(
    problem: &P,
    policy: &CombinedPolicy,
    state: &P::State,
    seeds: &[u64],
) -> Result<Vec<Solution>, PolicyError> {
    seeds
        .par_iter()
        .map_init(Evaluation::new, |ev, &seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_one(problem, policy, state.clone(), &mut rng, ev)
        })
        .collect()
}

/// Draws `count` independent trajectories from `state`. Each trajectory
/// gets its own stream seeded from `rng`, so the batch is reproducible.
pub fn sample_rollouts<P: Problem, R: RngCore + ?Sized>(
    problem: &P,
    policy: &CombinedPolicy,
    state: &P::State,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Solution>, PolicyError> {
    let seeds: Vec<u64> = (0..count).map(|_| rng.next_u64()).collect();
    sample_batch(problem, policy, state, &seeds)
}

/// `sum_d log pi(a_d | s_d)` along `actions` from the initial state.
pub fn trajectory_log_prob<P: Problem>(
    problem: &P,
    policy: &CombinedPolicy,
    actions: &[crate::problem::Action],
) -> Result<f64, PolicyError> {
    let mut ev = Evaluation::new();
    let mut state = problem.initial_state();
    let mut total = 0.0;
    for (depth, &a) in actions.iter().enumerate() {
        ev.evaluate(problem, policy, &state)?;
        let k = ev
            .position(a)
            .ok_or(PolicyError::Problem(crate::problem::ProblemError::InfeasibleAction { action: a, depth }))?;
        total += ev.log_probs[k];
        problem.step(&mut state, a);
    }
    Ok(total)
}
