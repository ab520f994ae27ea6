//! The five subcommands. Each has an in-memory core that tests call directly
//! and writes its artifacts under `config.out`.

use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sgbs_core::eas::{adaptation_csv, AdaptationRow, EasConfig};
use sgbs_core::policy::{serialize_checkpoint, CombinedPolicy, PolicyError, PolicyParams, TrainingPoint};
use sgbs_core::problem::{augment_x8, brute_force_optimum, serialize_batch, Action, Instance, OracleError};
use sgbs_core::runner::{run_with_budget, Method};
use sgbs_core::search::{SearchError, SgbsConfig};
use sgbs_core::with_problem;

use crate::config::{ExperimentConfig, InstanceSource, ReferenceMode, SweepMethod};
use crate::report::{curves_csv, grid_csv, mean_grid_csv, GapReport, GridRow, InstanceRow, MethodResult, ReferenceKind, Timing};
use crate::{instance_seeds, to_json, write_file, BenchError};

/// Validation instances use generator indices from here on, clear of both
/// the training indices and the pretraining held-out set.
pub const VALIDATION_OFFSET: u64 = 1 << 41;

/// One method on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    /// `Err` carries the divergence message.
    pub outcome: Result<RunResult, String>,
    pub wall: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub actions: Vec<Action>,
    /// Cost replayed on the original instance.
    pub cost: f64,
    pub candidates: u64,
    pub augmentation: Option<usize>,
    pub curve: Vec<(u64, f64)>,
    pub adaptation: Option<Vec<AdaptationRow>>,
}

fn is_divergence(e: &SearchError) -> bool {
    matches!(e, SearchError::Diverged(_) | SearchError::Policy(PolicyError::Diverged(_)))
}

fn search_error(e: SearchError) -> BenchError {
    match e {
        SearchError::InvalidConfig(m) => BenchError::Config(m),
        e => BenchError::Run(e.to_string()),
    }
}

/// Runs `method` on `instance` with `budget` candidates. With `augment`, the
/// method runs once per symmetry variant, each with the full budget, and the
/// best answer wins (ties to the lowest variant). Divergence is a value, not
/// an error.
pub fn run_instance(
    method: &Method,
    policy: &CombinedPolicy,
    instance: &Instance,
    budget: u64,
    seeds: &[u64; 8],
    augment: bool,
) -> Result<MethodRun, BenchError> {
    let start = Instant::now();
    let variants = if augment { augment_x8(instance).map_err(|e| BenchError::Config(e.to_string()))? } else { vec![instance.clone()] };
    let mut best: Option<RunResult> = None;
    for (k, variant) in variants.iter().enumerate() {
        let r = match with_problem!(variant, p => run_with_budget(method, policy, p, budget, seeds[k])) {
            Ok(r) => r,
            Err(e) if is_divergence(&e) => return Ok(MethodRun { outcome: Err(e.to_string()), wall: start.elapsed() }),
            Err(e) => return Err(search_error(e)),
        };
        // symmetric variants can differ from the original in the last bit
        let cost = -instance.reward(&r.solution.actions);
        if best.as_ref().is_none_or(|b| cost < b.cost) {
            best = Some(RunResult {
                actions: r.solution.actions,
                cost,
                candidates: r.trace.consumed,
                augmentation: augment.then_some(k),
                curve: r.trace.cost_curve(),
                adaptation: r.adaptation,
            });
        }
    }
    Ok(MethodRun { outcome: Ok(best.expect("at least one variant")), wall: start.elapsed() })
}

fn oracle_costs(instances: &[Instance], mode: ReferenceMode) -> Result<Option<Vec<f64>>, BenchError> {
    if mode == ReferenceMode::RunBest {
        return Ok(None);
    }
    let costs: Result<Vec<f64>, OracleError> = instances.par_iter().map(|i| brute_force_optimum(i).map(|s| s.cost())).collect();
    match (costs, mode) {
        (Ok(c), _) => Ok(Some(c)),
        (Err(_), ReferenceMode::Auto) => Ok(None),
        (Err(e), _) => Err(BenchError::Config(format!("reference oracle unavailable: {e}"))),
    }
}

/// Everything a comparison produces before it is written out.
#[derive(Debug, Clone)]
pub struct CompareOutput {
    pub report: GapReport,
    pub timing: Timing,
    /// `runs[instance][method]`.
    pub runs: Vec<Vec<MethodRun>>,
}

/// Runs every configured method on every instance under one budget.
pub fn compare(cfg: &ExperimentConfig) -> Result<CompareOutput, BenchError> {
    cfg.validate()?;
    if cfg.methods.is_empty() {
        return Err(BenchError::Config("no methods configured".into()));
    }
    let started = Instant::now();
    let instances = cfg.load_instances()?;
    let policy = cfg.load_policy()?;

    let t = Instant::now();
    let oracle = oracle_costs(&instances, cfg.reference)?;
    let oracle_seconds = t.elapsed().as_secs_f64();

    let runs: Vec<Vec<MethodRun>> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let seeds = instance_seeds(cfg.seed, i as u64);
            cfg.methods.iter().map(|m| run_instance(&m.method, &policy, inst, cfg.budget, &seeds, cfg.augment)).collect()
        })
        .collect::<Result<_, BenchError>>()?;

    let labels: Vec<String> = cfg.methods.iter().map(|m| m.label()).collect();
    let rows = runs
        .iter()
        .enumerate()
        .map(|(i, per_method)| {
            let reference = match &oracle {
                Some(o) => Some(o[i]),
                None => per_method.iter().filter_map(|r| r.outcome.as_ref().ok().map(|x| x.cost)).reduce(f64::min),
            };
            let results = per_method
                .iter()
                .zip(&labels)
                .map(|(run, label)| match &run.outcome {
                    Ok(r) => MethodResult {
                        method: label.clone(),
                        cost: Some(r.cost),
                        gap: reference.map(|rf| (r.cost - rf) / rf),
                        candidates: r.candidates,
                        augmentation: r.augmentation,
                        actions: r.actions.clone(),
                        diverged: None,
                    },
                    Err(msg) => MethodResult {
                        method: label.clone(),
                        cost: None,
                        gap: None,
                        candidates: 0,
                        augmentation: None,
                        actions: Vec::new(),
                        diverged: Some(msg.clone()),
                    },
                })
                .collect();
            InstanceRow { index: i, reference, results }
        })
        .collect();

    let mut report = GapReport {
        problem: cfg.problem.kind,
        size: cfg.problem.size,
        budget: cfg.budget,
        seed: cfg.seed,
        augment: cfg.augment,
        reference: if oracle.is_some() { ReferenceKind::Oracle } else { ReferenceKind::RunBest },
        methods: labels.clone(),
        instances: rows,
        summary: Vec::new(),
    };
    report.summarize();
    let method_seconds = labels
        .iter()
        .enumerate()
        .map(|(m, l)| (l.clone(), runs.iter().map(|r| r[m].wall.as_secs_f64()).sum()))
        .collect();
    let timing = Timing { total_seconds: started.elapsed().as_secs_f64(), oracle_seconds, method_seconds };
    Ok(CompareOutput { report, timing, runs })
}

fn slug(index: usize, label: &str) -> String {
    let s: String = label.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
    format!("{index:02}_{s}")
}

/// Writes `report.json`, `timing.json`, `curves/*.csv` and, for adaptive
/// methods, `adaptation/<method>/instance_XXX.csv`.
pub fn write_compare(out: &CompareOutput, dir: &Path) -> Result<(), BenchError> {
    write_file(&dir.join("report.json"), to_json(&out.report))?;
    write_file(&dir.join("timing.json"), to_json(&out.timing))?;
    let mut all = Vec::new();
    for (m, label) in out.report.methods.iter().enumerate() {
        let curves: Vec<(usize, Vec<(u64, f64)>)> = out
            .runs
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r[m].outcome.as_ref().ok().map(|x| (i, x.curve.clone())))
            .collect();
        write_file(&dir.join("curves").join(format!("{}.csv", slug(m, label))), curves_csv(&curves))?;
        all.push(curves.into_iter().map(|c| c.1).collect());
        for (i, r) in out.runs.iter().enumerate() {
            if let Ok(RunResult { adaptation: Some(rows), .. }) = &r[m].outcome {
                let path = dir.join("adaptation").join(slug(m, label)).join(format!("instance_{i:03}.csv"));
                write_file(&path, adaptation_csv(rows))?;
            }
        }
    }
    write_file(&dir.join("curves").join("mean.csv"), mean_grid_csv(&out.report.methods, &all, out.report.budget))?;
    Ok(())
}

/// Single-method batch solve. Writes `solutions.json` next to the usual
/// comparison artifacts.
pub fn solve(cfg: &ExperimentConfig) -> Result<CompareOutput, BenchError> {
    if cfg.methods.len() != 1 {
        return Err(BenchError::Config(format!("solve takes exactly one method, got {}", cfg.methods.len())));
    }
    let out = compare(cfg)?;
    #[derive(Serialize)]
    struct Entry<'a> {
        index: usize,
        cost: Option<f64>,
        augmentation: Option<usize>,
        actions: &'a [Action],
    }
    let entries: Vec<Entry> = out
        .report
        .instances
        .iter()
        .map(|r| Entry { index: r.index, cost: r.results[0].cost, augmentation: r.results[0].augmentation, actions: &r.results[0].actions })
        .collect();
    write_compare(&out, &cfg.out)?;
    write_file(&cfg.out.join("solutions.json"), to_json(&entries))?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: sgbs_core::problem::ProblemKind,
    pub size: usize,
    pub params: sgbs_core::problem::GeneratorParams,
    pub seed: u64,
    pub first_index: u64,
    pub count: usize,
    pub file: String,
    /// Size of every instance in file order.
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub index: usize,
    pub cost: f64,
    pub actions: Vec<Action>,
}

/// Writes `instances.txt`, `manifest.json` and, when every instance is within
/// the exact oracle's reach, `oracle.json`.
pub fn generate(cfg: &ExperimentConfig) -> Result<Manifest, BenchError> {
    cfg.validate()?;
    let InstanceSource::Generator { seed, count, first_index } = cfg.instances else {
        return Err(BenchError::Config("generate needs a generator instance source".into()));
    };
    let instances = cfg.load_instances()?;
    write_file(&cfg.out.join("instances.txt"), serialize_batch(&instances))?;
    let manifest = Manifest {
        kind: cfg.problem.kind,
        size: cfg.problem.size,
        params: cfg.problem.params.clone(),
        seed,
        first_index,
        count,
        file: "instances.txt".into(),
        sizes: instances.iter().map(Instance::size).collect(),
    };
    write_file(&cfg.out.join("manifest.json"), to_json(&manifest))?;
    let solved: Result<Vec<OracleEntry>, OracleError> = instances
        .par_iter()
        .enumerate()
        .map(|(index, i)| brute_force_optimum(i).map(|s| OracleEntry { index, cost: s.cost(), actions: s.actions }))
        .collect();
    if let Ok(entries) = solved {
        write_file(&cfg.out.join("oracle.json"), to_json(&entries))?;
    }
    Ok(manifest)
}

/// Mean cost, mean rollouts and wall time of one (beta, gamma) cell.
fn sweep_cell(
    cfg: &ExperimentConfig,
    instances: &[Instance],
    policy: &CombinedPolicy,
    beta: usize,
    gamma: usize,
) -> Result<GridRow, BenchError> {
    let sgbs = SgbsConfig { beta, gamma, ..SgbsConfig::default() };
    let method = match cfg.sweep.method {
        SweepMethod::Sgbs => Method::Sgbs(sgbs),
        SweepMethod::SgbsEas => Method::SgbsEas(EasConfig { sgbs, ..cfg.sweep.eas.clone() }),
    };
    method.validate().map_err(search_error)?;
    let budget = if cfg.sweep.fixed_budget { cfg.budget } else { u64::MAX };
    let start = Instant::now();
    let runs: Vec<MethodRun> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| run_instance(&method, policy, inst, budget, &instance_seeds(cfg.seed, i as u64), cfg.augment))
        .collect::<Result<_, _>>()?;
    let ok: Vec<&RunResult> = runs.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    if ok.len() < runs.len() {
        return Err(BenchError::Run(format!("sgbs({beta},{gamma}) diverged on {} instances", runs.len() - ok.len())));
    }
    let n = ok.len() as f64;
    Ok(GridRow {
        beta,
        gamma,
        mean_cost: ok.iter().map(|r| r.cost).sum::<f64>() / n,
        mean_rollouts: ok.iter().map(|r| r.candidates as f64).sum::<f64>() / n,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs the (beta, gamma) grid and writes `grid.csv`.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<GridRow>, BenchError> {
    cfg.validate()?;
    let s = &cfg.sweep;
    if s.betas.is_empty() || s.gammas.is_empty() {
        return Err(BenchError::Config("sweep needs at least one beta and one gamma".into()));
    }
    if s.method == SweepMethod::SgbsEas && !s.fixed_budget {
        return Err(BenchError::Config("sgbs+eas sweeps need a fixed budget".into()));
    }
    let instances = cfg.load_instances()?;
    let policy = cfg.load_policy()?;
    let mut rows = Vec::new();
    for &beta in &s.betas {
        for &gamma in &s.gammas {
            rows.push(sweep_cell(cfg, &instances, &policy, beta, gamma)?);
        }
    }
    write_file(&cfg.out.join("grid.csv"), grid_csv(&rows))?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    #[serde(flatten)]
    pub point: TrainingPoint,
    /// Mean probe cost on the validation set.
    pub probe_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub initial: TrainingPoint,
    pub curve: Vec<EpochRecord>,
    pub selected_epoch: usize,
    pub config: crate::config::PretrainSection,
}

pub const TRAINING_CURVE_HEADER: &str = "epoch,mean_greedy_cost,mean_entropy,probe_score";

/// Pretrains, scores every epoch's checkpoint with the probe, and selects the
/// lowest-scoring one (earliest on ties). Writes `checkpoints/epoch_XXX.ckpt`,
/// `training_curve.csv`, `policy.ckpt` (the selection) and `pretrain.json`.
pub fn pretrain(cfg: &ExperimentConfig) -> Result<PretrainReport, BenchError> {
    cfg.validate()?;
    let sec = &cfg.pretrain;
    if sec.train.epochs == 0 || sec.probe.instances == 0 || sec.probe.budget == 0 {
        return Err(BenchError::Config("pretraining needs epochs, probe instances and probe budget > 0".into()));
    }
    sec.probe.method.validate().map_err(search_error)?;
    // `policy` names the evaluation checkpoint, often this command's own output
    let start = PolicyParams::initial(cfg.problem.kind);
    let train = sgbs_core::policy::PretrainConfig { seed: cfg.seed, ..sec.train.clone() };
    let gen = cfg.generator(sec.generator_seed);
    let outcome = sgbs_core::policy::pretrain(&train, &gen, start).map_err(|e| match e {
        PolicyError::InvalidConfig(m) => BenchError::Config(m),
        e => BenchError::Run(e.to_string()),
    })?;
    let validation: Vec<Instance> = (0..sec.probe.instances as u64)
        .map(|i| gen.generate(VALIDATION_OFFSET + i))
        .collect::<Result<_, _>>()
        .map_err(|e| BenchError::Config(e.to_string()))?;

    let mut curve = Vec::with_capacity(outcome.curve.len());
    for (point, params) in outcome.curve.iter().zip(&outcome.checkpoints) {
        let probe_score = probe(cfg, &validation, params)?;
        curve.push(EpochRecord { point: point.clone(), probe_score });
    }
    let selected = curve.iter().enumerate().fold(0, |b, (i, r)| if r.probe_score < curve[b].probe_score { i } else { b });

    for (e, params) in outcome.checkpoints.iter().enumerate() {
        let path = cfg.out.join("checkpoints").join(format!("epoch_{:03}.ckpt", e + 1));
        write_file(&path, serialize_checkpoint(&CombinedPolicy::base(params.clone())))?;
    }
    let mut csv = format!("{TRAINING_CURVE_HEADER}\n");
    for r in &curve {
        csv += &format!("{},{},{},{}\n", r.point.epoch, r.point.mean_greedy_cost, r.point.mean_entropy, r.probe_score);
    }
    write_file(&cfg.out.join("training_curve.csv"), csv)?;
    write_file(&cfg.out.join("policy.ckpt"), serialize_checkpoint(&CombinedPolicy::base(outcome.checkpoints[selected].clone())))?;
    let report = PretrainReport { initial: outcome.initial, curve, selected_epoch: selected + 1, config: sec.clone() };
    write_file(&cfg.out.join("pretrain.json"), to_json(&report))?;
    Ok(report)
}

fn probe(cfg: &ExperimentConfig, validation: &[Instance], params: &PolicyParams) -> Result<f64, BenchError> {
    let policy = CombinedPolicy::base(params.clone());
    let costs: Vec<f64> = validation
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let seeds = instance_seeds(cfg.seed, VALIDATION_OFFSET + i as u64);
            let run = run_instance(&cfg.pretrain.probe.method, &policy, inst, cfg.pretrain.probe.budget, &seeds, false)?;
            run.outcome.map(|r| r.cost).map_err(|m| BenchError::Run(format!("probe diverged: {m}")))
        })
        .collect::<Result<_, _>>()?;
    Ok(costs.iter().sum::<f64>() / costs.len() as f64)
}
