//! Feature-logit policy with an insertable residual adapter.
//!
//! For every feasible action `a` at state `s` the logit is
//!
//! ```text
//! z(a) = -theta . f(s, a) / temperature + w2 . tanh(W1 f(s, a) + b1) + b2
//! ```
//!
//! where the second term is the adapter (absent for the base policy) and
//! `pi(. | s) = softmax(z)` over the feasible list. The adapter is created
//! with `w2 = 0, b2 = 0`, so inserting it leaves the base distribution
//! untouched. All gradients are analytic.

mod checkpoint;
mod gradcheck;
mod pretrain;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{Action, Problem, ProblemError, ProblemKind};

pub use checkpoint::{parse_checkpoint, read_checkpoint, serialize_checkpoint, write_checkpoint, CheckpointError};
pub use gradcheck::{finite_diff_check, GradCheck, GradTarget, FD_ABS_FLOOR, FD_STEP};
pub use pretrain::{greedy_cost_and_entropy, pretrain, PretrainConfig, PretrainOutcome, TrainingPoint};

pub(crate) use pretrain::mean_reward;

pub const DEFAULT_TEMPERATURE: f64 = 0.1;
pub const DEFAULT_HIDDEN: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("non-finite feature {index} for action {action}")]
    NonFiniteFeature { action: Action, index: usize },
    #[error("parameter shape mismatch: {0}")]
    Shape(String),
    #[error("diverged: {0}")]
    Diverged(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Frozen base parameters: one weight per feature and a temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub theta: Vec<f64>,
    pub temperature: f64,
}

impl PolicyParams {
    pub fn new(theta: Vec<f64>, temperature: f64) -> Result<Self, PolicyError> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(PolicyError::InvalidConfig(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Self { theta, temperature })
    }

    /// Softened nearest-neighbour start: unit weight on the first feature
    /// (distance from the current node, or processing time for FFSP).
    pub fn initial(kind: ProblemKind) -> Self {
        let theta = match kind {
            ProblemKind::Tsp => vec![1.0, 0.0, 0.0],
            ProblemKind::Cvrp => vec![1.0, 0.0, 0.0, 0.0, 0.0],
            // the no-op indicator gets a unit penalty as well, otherwise
            // idling would be the most likely decision
            ProblemKind::Ffsp => vec![1.0, 0.0, 1.0],
        };
        Self { theta, temperature: DEFAULT_TEMPERATURE }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|t| t.is_finite()) && self.temperature.is_finite()
    }
}

/// Residual adapter `w2 . tanh(W1 f + b1) + b2` on the logit. The same type
/// doubles as a gradient accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EasParams {
    pub features: usize,
    pub hidden: usize,
    /// Row-major `hidden x features`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl EasParams {
    pub fn zeros(features: usize, hidden: usize) -> Self {
        Self { features, hidden, w1: vec![0.0; hidden * features], b1: vec![0.0; hidden], w2: vec![0.0; hidden], b2: 0.0 }
    }

    /// Random input layer, zero output layer: the adapter outputs exactly 0.
    pub fn insert<R: Rng + ?Sized>(features: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(features, hidden);
        let scale = 1.0 / (features as f64).sqrt();
        for w in p.w1.iter_mut() {
            *w = rng.gen_range(-scale..scale);
        }
        for b in p.b1.iter_mut() {
            *b = rng.gen_range(-scale..scale);
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.features, self.hidden)
    }

    pub fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat view in the order `W1, b1, w2, b2`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.len(), "flat adapter length");
        let (w1, rest) = flat.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.b1.len());
        let (w2, rest) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2 = rest[0];
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, other: &EasParams, alpha: f64) {
        for (a, b) in self.w1.iter_mut().zip(&other.w1) {
            *a += alpha * b;
        }
        for (a, b) in self.b1.iter_mut().zip(&other.b1) {
            *a += alpha * b;
        }
        for (a, b) in self.w2.iter_mut().zip(&other.w2) {
            *a += alpha * b;
        }
        self.b2 += alpha * other.b2;
    }

    pub fn scale(&mut self, alpha: f64) {
        self.w1.iter_mut().chain(self.b1.iter_mut()).chain(self.w2.iter_mut()).for_each(|x| *x *= alpha);
        self.b2 *= alpha;
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|x| x.is_finite())
    }

    #[inline]
    fn hidden_into(&self, f: &[f64], h: &mut [f64]) {
        for (i, hi) in h.iter_mut().enumerate() {
            let row = &self.w1[i * self.features..(i + 1) * self.features];
            let pre: f64 = row.iter().zip(f).map(|(w, x)| w * x).sum::<f64>() + self.b1[i];
            *hi = pre.tanh();
        }
    }
}

/// Base policy plus optional adapter: the distribution actually sampled from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedPolicy {
    pub base: PolicyParams,
    pub adapter: Option<EasParams>,
}

impl CombinedPolicy {
    pub fn base(base: PolicyParams) -> Self {
        Self { base, adapter: None }
    }

    pub fn with_adapter(base: PolicyParams, adapter: EasParams) -> Self {
        Self { base, adapter: Some(adapter) }
    }

    pub fn feature_len(&self) -> usize {
        self.base.theta.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub actions: Vec<Action>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn prob_of(&self, action: Action) -> Option<f64> {
        self.actions.iter().position(|&a| a == action).map(|i| self.probs[i])
    }

    /// Highest logit, lowest action index on ties.
    pub fn argmax(&self) -> Action {
        self.actions[argmax(&self.logits)]
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.probs)
    }
}

/// `-sum p ln p`, treating `0 ln 0` as 0.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Index of the largest value, first index on ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Log-softmax via `ln_1p` of the non-maximal mass, which keeps
/// `log pi` of a dominant action accurate when it is close to 0.
pub(crate) fn log_softmax_into(logits: &[f64], log_probs: &mut Vec<f64>) {
    let top = argmax(logits);
    let max = logits[top];
    let rest: f64 = logits.iter().enumerate().filter(|&(k, _)| k != top).map(|(_, z)| (z - max).exp()).sum();
    let shift = rest.ln_1p();
    log_probs.clear();
    log_probs.extend(logits.iter().map(|z| z - max - shift));
}

/// Reusable buffers for evaluating the policy at one state.
#[derive(Debug, Default, Clone)]
pub struct Evaluation {
    pub actions: Vec<Action>,
    /// Row-major `actions x features`.
    pub features: Vec<f64>,
    /// Row-major `actions x hidden`, only filled with an adapter.
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub probs: Vec<f64>,
    feature_len: usize,
    hidden_len: usize,
}

impl Evaluation {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fills actions, features and logits. Probabilities are not computed.
    pub fn logits<P: Problem>(&mut self, problem: &P, policy: &CombinedPolicy, state: &P::State) -> Result<(), PolicyError> {
        let fl = problem.feature_len();
        if policy.base.theta.len() != fl {
            return Err(PolicyError::Shape(format!("theta has {} weights, problem has {fl} features", policy.base.theta.len())));
        }
        self.actions = problem.feasible_actions(state)?;
        let n = self.actions.len();
        self.feature_len = fl;
        self.features.clear();
        self.features.resize(n * fl, 0.0);
        for (i, &a) in self.actions.iter().enumerate() {
            let row = &mut self.features[i * fl..(i + 1) * fl];
            problem.features(state, a, row);
            if let Some(index) = row.iter().position(|x| !x.is_finite()) {
                return Err(PolicyError::NonFiniteFeature { action: a, index });
            }
        }
        let inv_t = 1.0 / policy.base.temperature;
        self.logits.clear();
        for i in 0..n {
            let f = &self.features[i * fl..(i + 1) * fl];
            let dot: f64 = policy.base.theta.iter().zip(f).map(|(w, x)| w * x).sum();
            self.logits.push(-dot * inv_t);
        }
        match &policy.adapter {
            Some(ad) => {
                if ad.features != fl {
                    return Err(PolicyError::Shape(format!("adapter expects {} features, problem has {fl}", ad.features)));
                }
                let hl = ad.hidden;
                self.hidden_len = hl;
                self.hidden.clear();
                self.hidden.resize(n * hl, 0.0);
                for i in 0..n {
                    let h = &mut self.hidden[i * hl..(i + 1) * hl];
                    ad.hidden_into(&self.features[i * fl..(i + 1) * fl], h);
                    let out: f64 = ad.w2.iter().zip(h.iter()).map(|(w, x)| w * x).sum::<f64>() + ad.b2;
                    self.logits[i] += out;
                }
            }
            None => {
                self.hidden_len = 0;
                self.hidden.clear();
            }
        }
        Ok(())
    }

    /// Fills everything including probabilities.
    pub fn evaluate<P: Problem>(&mut self, problem: &P, policy: &CombinedPolicy, state: &P::State) -> Result<(), PolicyError> {
        self.logits(problem, policy, state)?;
        log_softmax_into(&self.logits, &mut self.log_probs);
        self.probs.clear();
        self.probs.extend(self.log_probs.iter().map(|l| l.exp()));
        Ok(())
    }

    pub fn position(&self, action: Action) -> Option<usize> {
        self.actions.iter().position(|&a| a == action)
    }

    pub fn entropy(&self) -> f64 {
        -self.probs.iter().zip(&self.log_probs).map(|(p, l)| p * l).sum::<f64>()
    }

    /// Chains `dL/dz` (one entry per action) into adapter and base-weight
    /// gradients, scaled by `scale`.
    pub fn backprop(
        &self,
        policy: &CombinedPolicy,
        dz: &[f64],
        scale: f64,
        grad_psi: Option<&mut EasParams>,
        grad_theta: Option<&mut [f64]>,
    ) {
        let fl = self.feature_len;
        if let Some(gt) = grad_theta {
            let inv_t = 1.0 / policy.base.temperature;
            for (k, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let f = &self.features[k * fl..(k + 1) * fl];
                for (g, x) in gt.iter_mut().zip(f) {
                    *g -= scale * d * x * inv_t;
                }
            }
        }
        if let (Some(gp), Some(ad)) = (grad_psi, &policy.adapter) {
            let hl = self.hidden_len;
            for (k, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let c = scale * d;
                let f = &self.features[k * fl..(k + 1) * fl];
                let h = &self.hidden[k * hl..(k + 1) * hl];
                gp.b2 += c;
                for i in 0..hl {
                    gp.w2[i] += c * h[i];
                    let back = c * ad.w2[i] * (1.0 - h[i] * h[i]);
                    if back != 0.0 {
                        gp.b1[i] += back;
                        let row = &mut gp.w1[i * fl..(i + 1) * fl];
                        for (g, x) in row.iter_mut().zip(f) {
                            *g += back * x;
                        }
                    }
                }
            }
        }
    }

    /// `d log pi(a) / dz = onehot(a) - pi`, with `1 - pi(a)` summed from
    /// the other actions to avoid cancellation.
    pub fn log_prob_dz(&self, index: usize) -> Vec<f64> {
        let mut dz: Vec<f64> = self.probs.iter().map(|p| -p).collect();
        dz[index] = self.probs.iter().enumerate().filter(|&(k, _)| k != index).map(|(_, p)| p).sum();
        dz
    }

    /// `dH / dz_k = -pi_k (ln pi_k + H)`.
    pub fn entropy_dz(&self) -> Vec<f64> {
        let h = self.entropy();
        self.probs.iter().zip(&self.log_probs).map(|(&p, &l)| -p * (l + h)).collect()
    }

    pub fn distribution(&self) -> ActionDistribution {
        ActionDistribution { actions: self.actions.clone(), logits: self.logits.clone(), probs: self.probs.clone() }
    }
}

pub fn eval_policy<P: Problem>(problem: &P, policy: &CombinedPolicy, state: &P::State) -> Result<ActionDistribution, PolicyError> {
    let mut ev = Evaluation::new();
    ev.evaluate(problem, policy, state)?;
    Ok(ev.distribution())
}

fn require_adapter(policy: &CombinedPolicy) -> Result<&EasParams, PolicyError> {
    policy.adapter.as_ref().ok_or_else(|| PolicyError::Shape("policy has no adapter".into()))
}

fn action_index(ev: &Evaluation, action: Action, depth: usize) -> Result<usize, PolicyError> {
    ev.position(action).ok_or(PolicyError::Problem(ProblemError::InfeasibleAction { action, depth }))
}

/// Gradient of `log pi(action | state)` with respect to the adapter.
pub fn log_prob_grad_psi<P: Problem>(
    problem: &P,
    policy: &CombinedPolicy,
    state: &P::State,
    action: Action,
) -> Result<EasParams, PolicyError> {
    let ad = require_adapter(policy)?;
    let mut ev = Evaluation::new();
    ev.evaluate(problem, policy, state)?;
    let k = action_index(&ev, action, crate::problem::ProblemState::depth(state))?;
    let mut g = ad.zeros_like();
    ev.backprop(policy, &ev.log_prob_dz(k), 1.0, Some(&mut g), None);
    Ok(g)
}

/// Gradient of `log pi(action | state)` with respect to the base weights.
pub fn log_prob_grad_theta<P: Problem>(
    problem: &P,
    policy: &CombinedPolicy,
    state: &P::State,
    action: Action,
) -> Result<Vec<f64>, PolicyError> {
    let mut ev = Evaluation::new();
    ev.evaluate(problem, policy, state)?;
    let k = action_index(&ev, action, crate::problem::ProblemState::depth(state))?;
    let mut g = vec![0.0; policy.feature_len()];
    ev.backprop(policy, &ev.log_prob_dz(k), 1.0, None, Some(&mut g));
    Ok(g)
}

pub fn entropy_grad_psi<P: Problem>(problem: &P, policy: &CombinedPolicy, state: &P::State) -> Result<EasParams, PolicyError> {
    let ad = require_adapter(policy)?;
    let mut ev = Evaluation::new();
    ev.evaluate(problem, policy, state)?;
    let mut g = ad.zeros_like();
    ev.backprop(policy, &ev.entropy_dz(), 1.0, Some(&mut g), None);
    Ok(g)
}

pub fn entropy_grad_theta<P: Problem>(problem: &P, policy: &CombinedPolicy, state: &P::State) -> Result<Vec<f64>, PolicyError> {
    let mut ev = Evaluation::new();
    ev.evaluate(problem, policy, state)?;
    let mut g = vec![0.0; policy.feature_len()];
    ev.backprop(policy, &ev.entropy_dz(), 1.0, None, Some(&mut g));
    Ok(g)
}
