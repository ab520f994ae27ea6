//! Test-time adaptation on a single instance.
//!
//! Active search ascends the base weights. EAS freezes them and trains only
//! an inserted adapter `psi` with a REINFORCE term on fresh samples plus an
//! imitation term on the incumbent. SGBS+EAS alternates one SGBS call with
//! the EAS update, sharing the adapter and the incumbent.

use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::policy::{CombinedPolicy, EasParams, Evaluation, DEFAULT_HIDDEN};
use crate::problem::{Problem, ProblemError, Solution};
use crate::search::{sample_batch, sgbs_with_tracker, Phase, SearchError, SearchTrace, SgbsConfig, Tracker};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EasConfig {
    /// Step size alpha.
    pub learning_rate: f64,
    /// Weight lambda of the imitation term.
    pub imitation_weight: f64,
    /// Samples per update (M).
    pub samples: usize,
    /// Weight lambda_2 of the entropy term added to the REINFORCE gradient.
    pub entropy_coef: f64,
    pub max_iterations: Option<usize>,
    /// Wall-clock limit, checked between iterations only.
    pub timeout_secs: Option<f64>,
    pub sgbs: SgbsConfig,
    /// Sample-and-update rounds per SGBS call.
    pub eas_steps_per_sgbs: usize,
    /// Hidden width of the adapter.
    pub hidden: usize,
}

impl Default for EasConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            imitation_weight: 1.0,
            samples: 32,
            entropy_coef: 0.0,
            max_iterations: None,
            timeout_secs: None,
            sgbs: SgbsConfig::default(),
            eas_steps_per_sgbs: 1,
            hidden: DEFAULT_HIDDEN,
        }
    }
}

impl EasConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and >= 0");
        }
        if !(self.imitation_weight >= 0.0 && self.entropy_coef >= 0.0) {
            return bad("imitation and entropy weights must be >= 0");
        }
        if self.samples < 2 {
            return bad("need at least 2 samples per update");
        }
        if self.eas_steps_per_sgbs == 0 || self.hidden == 0 {
            return bad("eas_steps_per_sgbs and hidden must be positive");
        }
        if matches!(self.timeout_secs, Some(t) if !(t > 0.0)) {
            return bad("timeout must be positive");
        }
        self.sgbs.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Sgbs,
    Sample,
}

/// Best solution of one adaptation run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IncumbentStore {
    best: Option<Solution>,
    iteration: usize,
    source: Option<Source>,
    /// `(iteration, reward, source)` of every improvement.
    pub updates: Vec<(usize, f64, Source)>,
}

impl IncumbentStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps `solution` if it is strictly better. Returns whether it was kept.
    pub fn offer(&mut self, solution: &Solution, iteration: usize, source: Source) -> bool {
        if self.best.as_ref().is_some_and(|b| b.reward >= solution.reward) {
            return false;
        }
        self.best = Some(solution.clone());
        self.iteration = iteration;
        self.source = Some(source);
        self.updates.push((iteration, solution.reward, source));
        true
    }

    pub fn best(&self) -> Option<&Solution> {
        self.best.as_ref()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn source(&self) -> Option<Source> {
        self.source
    }
}

/// One row per outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationRow {
    pub iteration: usize,
    /// Budget consumed at the end of the iteration.
    pub candidate_count: u64,
    pub sgbs_cost: Option<f64>,
    pub best_sample_cost: Option<f64>,
    pub incumbent_cost: f64,
    pub grad_norm_jrl: f64,
    pub grad_norm_jil: f64,
    /// Mean policy entropy over the states visited by this iteration's samples.
    pub entropy_mean: f64,
    /// Parameter version the SGBS call of this iteration ran with.
    pub sgbs_version: Option<u64>,
    /// Parameter version after this iteration's updates.
    pub version: u64,
}

pub const ADAPTATION_CSV_HEADER: &str =
    "iteration,candidate_count,sgbs_cost,best_sample_cost,incumbent_cost,grad_norm_JRL,grad_norm_JIL,entropy_mean";

pub fn adaptation_csv(rows: &[AdaptationRow]) -> String {
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut out = format!("{ADAPTATION_CSV_HEADER}\n");
    for r in rows {
        out += &format!(
            "{},{},{},{},{},{},{},{}\n",
            r.iteration,
            r.candidate_count,
            opt(r.sgbs_cost),
            opt(r.best_sample_cost),
            r.incumbent_cost,
            r.grad_norm_jrl,
            r.grad_norm_jil,
            r.entropy_mean
        );
    }
    out
}

/// Budget units per source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UnitCounts {
    pub sgbs: u64,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptOutcome {
    pub solution: Solution,
    pub trace: SearchTrace,
    pub rows: Vec<AdaptationRow>,
    pub incumbent: IncumbentStore,
    pub units: UnitCounts,
    /// Policy after the last update.
    pub policy: CombinedPolicy,
}

#[derive(Default)]
struct Grad {
    psi: Option<EasParams>,
    theta: Option<Vec<f64>>,
    entropy_sum: f64,
    steps: usize,
}

/// Replays `actions`, adding `weight * grad log pi(a_d|s_d)` and
/// `entropy_weight * grad H(s_d)` at every step.
fn accumulate<P: Problem>(
    problem: &P,
    policy: &CombinedPolicy,
    actions: &[crate::problem::Action],
    weight: f64,
    entropy_weight: f64,
    acc: &mut Grad,
    ev: &mut Evaluation,
) -> Result<(), SearchError> {
    let mut state = problem.initial_state();
    for (depth, &a) in actions.iter().enumerate() {
        if problem.is_terminal(&state) {
            return Err(SearchError::CorruptIncumbent(ProblemError::InfeasibleAction { action: a, depth }));
        }
        ev.evaluate(problem, policy, &state)?;
        acc.entropy_sum += ev.entropy();
        acc.steps += 1;
        let k = ev.position(a).ok_or(SearchError::CorruptIncumbent(ProblemError::InfeasibleAction { action: a, depth }))?;
        if weight != 0.0 {
            ev.backprop(policy, &ev.log_prob_dz(k), weight, acc.psi.as_mut(), acc.theta.as_deref_mut());
        }
        if entropy_weight != 0.0 {
            ev.backprop(policy, &ev.entropy_dz(), entropy_weight, acc.psi.as_mut(), acc.theta.as_deref_mut());
        }
        problem.step(&mut state, a);
    }
    if !problem.is_terminal(&state) {
        return Err(SearchError::CorruptIncumbent(ProblemError::InvalidInstance("action tuple is incomplete".into())));
    }
    Ok(())
}

fn rl_gradient<P: Problem>(
    problem: &P,
    policy: &CombinedPolicy,
    samples: &[Solution],
    baseline: f64,
    entropy_coef: f64,
    mut acc: Grad,
) -> Result<Grad, SearchError> {
    let m = samples.len() as f64;
    let mut ev = Evaluation::new();
    for s in samples {
        accumulate(problem, policy, &s.actions, (s.reward - baseline) / m, entropy_coef / m, &mut acc, &mut ev)?;
    }
    Ok(acc)
}

fn adapter_of(policy: &CombinedPolicy) -> Result<&EasParams, SearchError> {
    policy.adapter.as_ref().ok_or_else(|| SearchError::InvalidConfig("policy has no adapter".into()))
}

/// REINFORCE gradient over the adapter on frozen samples:
/// `(1/M) sum_i (R_i - b) sum_d grad log pi(a_d|s_d)`, plus
/// `entropy_coef (1/M) sum_i sum_d grad H(pi(.|s_d))`.
pub fn grad_jrl<P: Problem>(
    problem: &P,
    policy: &CombinedPolicy,
    samples: &[Solution],
    baseline: f64,
    entropy_coef: f64,
) -> Result<EasParams, SearchError> {
    let acc = Grad { psi: Some(adapter_of(policy)?.zeros_like()), ..Grad::default() };
    Ok(rl_gradient(problem, policy, samples, baseline, entropy_coef, acc)?.psi.expect("psi accumulator"))
}

/// Imitation gradient `sum_d grad log pi(a*_d | s*_d)` over the adapter.
pub fn grad_jil<P: Problem>(problem: &P, policy: &CombinedPolicy, incumbent: &Solution) -> Result<EasParams, SearchError> {
    let mut acc = Grad { psi: Some(adapter_of(policy)?.zeros_like()), ..Grad::default() };
    accumulate(problem, policy, &incumbent.actions, 1.0, 0.0, &mut acc, &mut Evaluation::new())?;
    Ok(acc.psi.expect("psi accumulator"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Active,
    Eas,
    SgbsEas,
}

/// Active search: REINFORCE on all base weights, no adapter, no imitation.
pub fn active_search<P: Problem>(
    problem: &P,
    policy: &CombinedPolicy,
    config: &EasConfig,
    budget: u64,
    seed: u64,
) -> Result<AdaptOutcome, SearchError> {
    adapt(problem, policy, config, budget, seed, Mode::Active)
}

/// EAS: sample, update the incumbent, ascend the adapter.
pub fn eas<P: Problem>(
    problem: &P,
    policy: &CombinedPolicy,
    config: &EasConfig,
    budget: u64,
    seed: u64,
) -> Result<AdaptOutcome, SearchError> {
    adapt(problem, policy, config, budget, seed, Mode::Eas)
}

/// SGBS+EAS: each iteration runs SGBS with the current adapter, then the
/// EAS update. The SGBS answer competes for the incumbent but is not part of
/// the REINFORCE batch.
pub fn sgbs_eas<P: Problem>(
    problem: &P,
    policy: &CombinedPolicy,
    config: &EasConfig,
    budget: u64,
    seed: u64,
) -> Result<AdaptOutcome, SearchError> {
    adapt(problem, policy, config, budget, seed, Mode::SgbsEas)
}

fn adapt<P: Problem>(
    problem: &P,
    start: &CombinedPolicy,
    config: &EasConfig,
    budget: u64,
    seed: u64,
    mode: Mode,
) -> Result<AdaptOutcome, SearchError> {
    config.validate()?;
    if budget == 0 {
        return Err(SearchError::NoBudget);
    }
    let started = Instant::now();
    let timeout = config.timeout_secs.map(Duration::from_secs_f64);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = start.clone();
    if mode != Mode::Active {
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        init_rng.set_stream(1);
        policy.adapter = Some(EasParams::insert(problem.feature_len(), config.hidden, &mut init_rng));
    } else {
        policy.adapter = None;
    }
    let imitation = if mode == Mode::Active { 0.0 } else { config.imitation_weight };
    let steps_per_iteration = if mode == Mode::SgbsEas { config.eas_steps_per_sgbs } else { 1 };

    let s0 = problem.initial_state();
    let mut tracker = Tracker::new(budget);
    let mut store = IncumbentStore::new();
    let mut units = UnitCounts::default();
    let mut rows = Vec::new();
    let mut version = 0u64;
    let mut iteration = 0;

    'outer: while tracker.remaining() > 0 {
        if config.max_iterations.is_some_and(|m| iteration >= m) || timeout.is_some_and(|t| started.elapsed() >= t) {
            break;
        }
        let mut row = AdaptationRow {
            iteration,
            candidate_count: 0,
            sgbs_cost: None,
            best_sample_cost: None,
            incumbent_cost: f64::NAN,
            grad_norm_jrl: 0.0,
            grad_norm_jil: 0.0,
            entropy_mean: 0.0,
            sgbs_version: None,
            version,
        };

        if mode == Mode::SgbsEas {
            let before = tracker.consumed();
            row.sgbs_version = Some(version);
            // with the adapter still transparent, the first root simulation
            // of iteration 0 is the greedy solution of the base policy, which
            // thereby seeds the incumbent without an extra unit
            let sol = sgbs_with_tracker(problem, &policy, &config.sgbs, &mut tracker)?;
            units.sgbs += tracker.consumed() - before;
            row.sgbs_cost = Some(sol.cost());
            store.offer(&sol, iteration, Source::Sgbs);
            if tracker.is_truncated() {
                finish_row(&mut row, &tracker, &store);
                rows.push(row);
                break;
            }
        }

        for _ in 0..steps_per_iteration {
            let m = (config.samples as u64).min(tracker.remaining()) as usize;
            if m == 0 {
                break;
            }
            let seeds: Vec<u64> = (0..m).map(|_| sample_rng.next_u64()).collect();
            let batch = sample_batch(problem, &policy, &s0, &seeds)?;
            units.samples += m as u64;
            for s in &batch {
                tracker.consume(s, Phase::Sample);
            }
            let best = batch.iter().fold(&batch[0], |b, s| if s.reward > b.reward { s } else { b });
            row.best_sample_cost = Some(row.best_sample_cost.map_or(best.cost(), |c: f64| c.min(best.cost())));
            store.offer(best, iteration, Source::Sample);
            if m < 2 {
                // a single leftover sample carries no baseline information
                finish_row(&mut row, &tracker, &store);
                rows.push(row);
                break 'outer;
            }

            let baseline = crate::policy::mean_reward(&batch);
            let fresh = |p: &CombinedPolicy| match mode {
                Mode::Active => Grad { theta: Some(vec![0.0; p.feature_len()]), ..Grad::default() },
                _ => Grad { psi: p.adapter.as_ref().map(|a| a.zeros_like()), ..Grad::default() },
            };
            let rl = rl_gradient(problem, &policy, &batch, baseline, config.entropy_coef, fresh(&policy))?;
            row.entropy_mean = rl.entropy_sum / rl.steps.max(1) as f64;
            let mut il = fresh(&policy);
            if imitation > 0.0 {
                let inc = store.best().expect("incumbent exists after sampling").clone();
                accumulate(problem, &policy, &inc.actions, 1.0, 0.0, &mut il, &mut Evaluation::new())?;
            }
            match mode {
                Mode::Active => {
                    let g = rl.theta.expect("theta accumulator");
                    row.grad_norm_jrl = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                    for (t, x) in policy.base.theta.iter_mut().zip(&g) {
                        *t += config.learning_rate * x;
                    }
                    if !policy.base.is_finite() {
                        return Err(SearchError::Diverged(format!("non-finite weights at iteration {iteration}")));
                    }
                }
                _ => {
                    let g_rl = rl.psi.expect("psi accumulator");
                    let g_il = il.psi.expect("psi accumulator");
                    row.grad_norm_jrl = g_rl.norm();
                    row.grad_norm_jil = g_il.norm();
                    let adapter = policy.adapter.as_mut().expect("adapter present");
                    adapter.add_scaled(&g_rl, config.learning_rate);
                    adapter.add_scaled(&g_il, config.learning_rate * imitation);
                    if !adapter.is_finite() {
                        return Err(SearchError::Diverged(format!("non-finite adapter at iteration {iteration}")));
                    }
                }
            }
            version += 1;
            if tracker.remaining() == 0 {
                break;
            }
        }
        row.version = version;
        finish_row(&mut row, &tracker, &store);
        rows.push(row);
        iteration += 1;
    }

    let solution = store.best().cloned().ok_or(SearchError::NoBudget)?;
    Ok(AdaptOutcome { solution, trace: tracker.trace(), rows, incumbent: store, units, policy })
}

fn finish_row(row: &mut AdaptationRow, tracker: &Tracker, store: &IncumbentStore) {
    row.candidate_count = tracker.consumed();
    row.incumbent_cost = store.best().map_or(f64::NAN, |s| s.cost());
}
