//! REINFORCE pretraining of the base weights with a shared batch-mean
//! baseline and an optional entropy bonus.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::problem::{Instance, InstanceGenerator, Problem, ProblemState, Solution};
use crate::search::{greedy_rollout, sample_rollouts};

use super::{CombinedPolicy, Evaluation, PolicyError, PolicyParams};

/// First generator index of the held-out set, far away from training indices.
const HELD_OUT_OFFSET: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub learning_rate: f64,
    /// Sampled solutions per training instance (K).
    pub samples_per_instance: usize,
    pub instances_per_batch: usize,
    pub batches_per_epoch: usize,
    pub epochs: usize,
    /// Entropy bonus weight (lambda_1).
    pub entropy_coef: f64,
    pub seed: u64,
    /// Size of the held-out set used for the training curve.
    pub eval_instances: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            samples_per_instance: 16,
            instances_per_batch: 16,
            batches_per_epoch: 8,
            epochs: 10,
            entropy_coef: 0.0,
            seed: 0,
            eval_instances: 64,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(PolicyError::InvalidConfig(format!("learning rate must be >= 0, got {}", self.learning_rate)));
        }
        if self.samples_per_instance < 2 {
            return Err(PolicyError::InvalidConfig("need at least 2 samples per instance".into()));
        }
        if !(self.entropy_coef >= 0.0) {
            return Err(PolicyError::InvalidConfig(format!("entropy coefficient must be >= 0, got {}", self.entropy_coef)));
        }
        if self.instances_per_batch == 0 || self.batches_per_epoch == 0 || self.eval_instances == 0 {
            return Err(PolicyError::InvalidConfig("batch, epoch and held-out sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint {
    pub epoch: usize,
    pub mean_greedy_cost: f64,
    /// Mean policy entropy over the states of the held-out greedy trajectories.
    pub mean_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainOutcome {
    pub params: PolicyParams,
    /// Held-out metrics before the first update.
    pub initial: TrainingPoint,
    /// One row per epoch.
    pub curve: Vec<TrainingPoint>,
    /// Parameters after each epoch, aligned with `curve`.
    pub checkpoints: Vec<PolicyParams>,
}

/// Mean greedy cost and mean per-step entropy along the greedy trajectories.
pub fn greedy_cost_and_entropy(instances: &[Instance], params: &PolicyParams) -> Result<(f64, f64), PolicyError> {
    let policy = CombinedPolicy::base(params.clone());
    let per: Vec<(f64, f64, usize)> = instances
        .par_iter()
        .map(|inst| {
            crate::with_problem!(inst, p => {
                let sol = greedy_rollout(p, &policy, &p.initial_state())?;
                let (h, steps) = trajectory_entropy(p, &policy, &sol)?;
                Ok((sol.cost(), h, steps))
            })
        })
        .collect::<Result<_, PolicyError>>()?;
    let cost = per.iter().map(|x| x.0).sum::<f64>() / per.len() as f64;
    let steps: usize = per.iter().map(|x| x.2).sum();
    let entropy = per.iter().map(|x| x.1).sum::<f64>() / steps.max(1) as f64;
    Ok((cost, entropy))
}

fn trajectory_entropy<P: Problem>(problem: &P, policy: &CombinedPolicy, sol: &Solution) -> Result<(f64, usize), PolicyError> {
    let mut ev = Evaluation::new();
    let mut state = problem.initial_state();
    let mut total = 0.0;
    for &a in &sol.actions {
        ev.evaluate(problem, policy, &state)?;
        total += ev.entropy();
        problem.step(&mut state, a);
    }
    Ok((total, sol.actions.len()))
}

/// `(1/K) sum_i (R_i - b) sum_d grad log pi + coef (1/K) sum_i sum_d grad H`
/// for one instance, with `b` the mean sample reward.
fn instance_gradient<P: Problem>(
    problem: &P,
    policy: &CombinedPolicy,
    samples: usize,
    entropy_coef: f64,
    seed: u64,
) -> Result<Vec<f64>, PolicyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = sample_rollouts(problem, policy, &problem.initial_state(), samples, &mut rng)?;
    let baseline = mean_reward(&batch);
    let k = batch.len() as f64;
    let mut grad = vec![0.0; policy.feature_len()];
    let mut ev = Evaluation::new();
    for sol in &batch {
        let adv = (sol.reward - baseline) / k;
        if adv == 0.0 && entropy_coef == 0.0 {
            continue;
        }
        let mut state = problem.initial_state();
        for &a in &sol.actions {
            ev.evaluate(problem, policy, &state)?;
            if adv != 0.0 {
                let idx = ev
                    .position(a)
                    .ok_or(crate::problem::ProblemError::InfeasibleAction { action: a, depth: state.depth() })?;
                ev.backprop(policy, &ev.log_prob_dz(idx), adv, None, Some(&mut grad));
            }
            if entropy_coef != 0.0 {
                ev.backprop(policy, &ev.entropy_dz(), entropy_coef / k, None, Some(&mut grad));
            }
            problem.step(&mut state, a);
        }
    }
    Ok(grad)
}

/// Batch-mean reward; exact when all rewards coincide.
pub(crate) fn mean_reward(batch: &[Solution]) -> f64 {
    let first = batch[0].reward;
    if batch.iter().all(|s| s.reward == first) {
        return first;
    }
    batch.iter().map(|s| s.reward).sum::<f64>() / batch.len() as f64
}

/// Trains `params.theta` on instances drawn from `generator`.
///
/// Training instance `b * instances_per_batch + i` of epoch `e` is generator
/// index `(e * batches_per_epoch + b) * instances_per_batch + i`; the held-out
/// set uses indices from `2^40` on. Sampling seeds derive from
/// `config.seed`, so runs are reproducible for any worker count.
pub fn pretrain(config: &PretrainConfig, generator: &InstanceGenerator, params: PolicyParams) -> Result<PretrainOutcome, PolicyError> {
    config.validate()?;
    let held_out = (0..config.eval_instances as u64)
        .map(|i| generator.generate(HELD_OUT_OFFSET + i))
        .collect::<Result<Vec<_>, _>>()?;
    let point = |epoch: usize, params: &PolicyParams| -> Result<TrainingPoint, PolicyError> {
        let (mean_greedy_cost, mean_entropy) = greedy_cost_and_entropy(&held_out, params)?;
        Ok(TrainingPoint { epoch, mean_greedy_cost, mean_entropy })
    };

    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let mut policy = CombinedPolicy::base(params);
    let initial = point(0, &policy.base)?;
    let mut curve = Vec::with_capacity(config.epochs);
    let mut checkpoints = Vec::with_capacity(config.epochs);
    let per_batch = config.instances_per_batch as u64;

    for epoch in 0..config.epochs {
        for b in 0..config.batches_per_epoch {
            let first = (epoch * config.batches_per_epoch + b) as u64 * per_batch;
            let jobs: Vec<(u64, u64)> = (0..per_batch).map(|i| (first + i, master.next_u64())).collect();
            let grads = jobs
                .par_iter()
                .map(|&(index, seed)| {
                    let inst = generator.generate(index)?;
                    crate::with_problem!(&inst, p => {
                        instance_gradient(p, &policy, config.samples_per_instance, config.entropy_coef, seed)
                    })
                })
                .collect::<Result<Vec<_>, PolicyError>>()?;
            let scale = config.learning_rate / grads.len() as f64;
            for g in &grads {
                for (t, x) in policy.base.theta.iter_mut().zip(g) {
                    *t += scale * x;
                }
            }
            if !policy.base.is_finite() {
                return Err(PolicyError::Diverged(format!(
                    "non-finite weights {:?} after epoch {} batch {}",
                    policy.base.theta, epoch + 1, b
                )));
            }
        }
        curve.push(point(epoch + 1, &policy.base)?);
        checkpoints.push(policy.base.clone());
    }
    Ok(PretrainOutcome { params: policy.base, initial, curve, checkpoints })
}
