//! Report types and their CSV forms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sgbs_core::problem::{Action, ProblemKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    Oracle,
    RunBest,
}

/// Outcome of one method on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    /// `None` when the method diverged.
    pub cost: Option<f64>,
    /// `(cost - reference) / reference`.
    pub gap: Option<f64>,
    pub candidates: u64,
    /// Winning augmentation variant, when augmenting.
    pub augmentation: Option<usize>,
    pub actions: Vec<Action>,
    pub diverged: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub index: usize,
    pub reference: Option<f64>,
    pub results: Vec<MethodResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    /// Means over the instances where the method did not diverge.
    pub mean_cost: Option<f64>,
    pub mean_gap_percent: Option<f64>,
    pub mean_candidates: Option<f64>,
    pub solved: usize,
    pub diverged: usize,
}

/// Per-instance cost matrix and aggregate table. Contains no timing, so
/// equal seeds give byte-identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub problem: ProblemKind,
    pub size: usize,
    pub budget: u64,
    pub seed: u64,
    pub augment: bool,
    pub reference: ReferenceKind,
    pub methods: Vec<String>,
    pub instances: Vec<InstanceRow>,
    pub summary: Vec<MethodSummary>,
}

impl GapReport {
    pub fn summary_of(&self, method: &str) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    pub fn mean_cost(&self, method: &str) -> Option<f64> {
        self.summary_of(method).and_then(|s| s.mean_cost)
    }

    pub fn divergences(&self) -> usize {
        self.summary.iter().map(|s| s.diverged).sum()
    }

    /// Fills `summary` from `instances`.
    pub fn summarize(&mut self) {
        self.summary = self
            .methods
            .iter()
            .enumerate()
            .map(|(m, name)| {
                let ok: Vec<&MethodResult> = self.instances.iter().map(|r| &r.results[m]).filter(|r| r.cost.is_some()).collect();
                let mean = |f: &dyn Fn(&MethodResult) -> Option<f64>| {
                    let xs: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
                    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
                };
                MethodSummary {
                    method: name.clone(),
                    mean_cost: mean(&|r| r.cost),
                    mean_gap_percent: mean(&|r| r.gap.map(|g| 100.0 * g)),
                    mean_candidates: mean(&|r| Some(r.candidates as f64)),
                    solved: ok.len(),
                    diverged: self.instances.len() - ok.len(),
                }
            })
            .collect();
    }
}

/// Wall-clock seconds, kept out of the deterministic report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub oracle_seconds: f64,
    /// Summed over instances.
    pub method_seconds: BTreeMap<String, f64>,
}

pub const CURVE_HEADER: &str = "instance,candidate_count,incumbent_cost";

/// Incumbent step curves of one method, all instances in one file.
pub fn curves_csv(curves: &[(usize, Vec<(u64, f64)>)]) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for (i, curve) in curves {
        for (c, cost) in curve {
            out += &format!("{i},{c},{cost}\n");
        }
    }
    out
}

/// Incumbent cost of a step curve after `count` candidates.
pub fn cost_at(curve: &[(u64, f64)], count: u64) -> Option<f64> {
    curve.iter().take_while(|(c, _)| *c <= count).last().map(|p| p.1)
}

/// Candidate counts of the mean grid: 1 and fifty even steps up to the budget.
pub fn grid_points(budget: u64) -> Vec<u64> {
    let mut pts: Vec<u64> = std::iter::once(1).chain((1..=50).map(|j| (budget * j).div_ceil(50))).collect();
    pts.dedup();
    pts
}

/// Mean incumbent cost per method on a common candidate grid. A cell is
/// empty while some instance has no incumbent yet.
pub fn mean_grid_csv(labels: &[String], curves: &[Vec<Vec<(u64, f64)>>], budget: u64) -> String {
    let mut out = String::from("candidate_count");
    for l in labels {
        out += &format!(",{l:?}");
    }
    out.push('\n');
    for c in grid_points(budget) {
        out += &c.to_string();
        for per_instance in curves {
            let vals: Option<Vec<f64>> = per_instance.iter().map(|curve| cost_at(curve, c)).collect();
            match vals {
                Some(v) if !v.is_empty() => out += &format!(",{}", v.iter().sum::<f64>() / v.len() as f64),
                _ => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// One cell of a (beta, gamma) sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub beta: usize,
    pub gamma: usize,
    pub mean_cost: f64,
    pub mean_rollouts: f64,
    pub wall_seconds: f64,
}

pub const GRID_HEADER: &str = "beta,gamma,mean_cost,mean_rollouts,wall_seconds";

pub fn grid_csv(rows: &[GridRow]) -> String {
    let mut out = format!("{GRID_HEADER}\n");
    for r in rows {
        out += &format!("{},{},{},{},{}\n", r.beta, r.gamma, r.mean_cost, r.mean_rollouts, r.wall_seconds);
    }
    out
}

pub fn parse_grid_csv(text: &str) -> Result<Vec<GridRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(GRID_HEADER) {
        return Err("missing grid header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(format!("row {}: expected 5 fields", i + 1));
            }
            let err = |_| format!("row {}: bad number", i + 1);
            Ok(GridRow {
                beta: f[0].parse().map_err(|_| format!("row {}: bad beta", i + 1))?,
                gamma: f[1].parse().map_err(|_| format!("row {}: bad gamma", i + 1))?,
                mean_cost: f[2].parse().map_err(err)?,
                mean_rollouts: f[3].parse().map_err(err)?,
                wall_seconds: f[4].parse().map_err(err)?,
            })
        })
        .collect()
}
