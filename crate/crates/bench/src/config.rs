//! Experiment configuration files.
//!
//! ```json
//! {
//!   "problem": { "kind": "TSP", "size": 20 },
//!   "instances": { "generator": { "seed": 1000, "count": 50 } },
//!   "methods": [ { "method": "sampling" }, { "method": "sgbs", "beta": 4, "gamma": 4 } ],
//!   "budget": 1200,
//!   "seed": 0,
//!   "out": "runs/tsp20"
//! }
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sgbs_core::eas::EasConfig;
use sgbs_core::policy::{read_checkpoint, CombinedPolicy, PolicyParams, PretrainConfig};
use sgbs_core::problem::{read_batch, GeneratorParams, Instance, InstanceGenerator, ProblemKind};
use sgbs_core::runner::Method;

use crate::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// Node count (TSP), customer count (CVRP) or job count (FFSP).
    pub size: usize,
    #[serde(default)]
    pub params: GeneratorParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    Generator {
        seed: u64,
        count: usize,
        /// Generator index of the first instance.
        #[serde(default)]
        first_index: u64,
    },
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMode {
    /// Oracle when every instance is within its limits, else run-best.
    #[default]
    Auto,
    Oracle,
    RunBest,
}

/// A method together with an optional report label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub method: Method,
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        Self { name: None, method }
    }

    pub fn named(name: &str, method: Method) -> Self {
        Self { name: Some(name.to_string()), method }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.method.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMethod {
    #[default]
    Sgbs,
    SgbsEas,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub betas: Vec<usize>,
    pub gammas: Vec<usize>,
    pub method: SweepMethod,
    /// Settings of the SGBS+EAS cells; beta and gamma are overwritten.
    pub eas: EasConfig,
    /// Without a budget limit SGBS runs its full tree (fixed depth).
    pub fixed_budget: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            betas: vec![1, 2, 4, 8],
            gammas: vec![1, 2, 4, 8],
            method: SweepMethod::Sgbs,
            eas: EasConfig::default(),
            fixed_budget: true,
        }
    }
}

/// Early-stop probe: a short run of `method` on a validation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub instances: usize,
    pub budget: u64,
    pub method: Method,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            instances: 8,
            budget: 200,
            method: Method::SgbsEas(EasConfig { samples: 16, ..EasConfig::default() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainSection {
    pub train: PretrainConfig,
    /// Seed of the training instance generator.
    pub generator_seed: u64,
    pub probe: ProbeConfig,
}

impl Default for PretrainSection {
    fn default() -> Self {
        Self { train: PretrainConfig::default(), generator_seed: 7, probe: ProbeConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub instances: InstanceSource,
    /// Base policy checkpoint; the untrained initial weights when absent.
    #[serde(default)]
    pub policy: Option<PathBuf>,
    #[serde(default)]
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default)]
    pub augment: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub reference: ReferenceMode,
    #[serde(default)]
    pub pretrain: PretrainSection,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_budget() -> u64 {
    1200
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub budget: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(kind: ProblemKind, size: usize, instances: InstanceSource) -> Self {
        Self {
            problem: ProblemSpec { kind, size, params: GeneratorParams::default() },
            instances,
            policy: None,
            methods: Vec::new(),
            budget: default_budget(),
            augment: false,
            seed: 0,
            out: default_out(),
            reference: ReferenceMode::Auto,
            pretrain: PretrainSection::default(),
            sweep: SweepConfig::default(),
        }
    }

    /// Reads a JSON file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let InstanceSource::File(f) = &mut cfg.instances {
            rebase(f);
        }
        if let Some(p) = &mut cfg.policy {
            rebase(p);
        }
        rebase(&mut cfg.out);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(b) = o.budget {
            self.budget = b;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
    }

    pub fn generator(&self, seed: u64) -> InstanceGenerator {
        InstanceGenerator::new(self.problem.kind, self.problem.size, seed).with_params(self.problem.params.clone())
    }

    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.budget == 0 {
            return bad("budget must be > 0".into());
        }
        if self.problem.size == 0 {
            return bad("problem size must be > 0".into());
        }
        if self.augment && self.problem.kind == ProblemKind::Ffsp {
            return bad("augmentation is defined for TSP and CVRP only".into());
        }
        match &self.instances {
            InstanceSource::Generator { count: 0, .. } => return bad("instance count must be > 0".into()),
            InstanceSource::File(f) if !f.is_file() => return bad(format!("instance file {} does not exist", f.display())),
            _ => {}
        }
        let mut labels = BTreeSet::new();
        for m in &self.methods {
            m.method.validate().map_err(|e| BenchError::Config(format!("{}: {e}", m.label())))?;
            if !labels.insert(m.label()) {
                return bad(format!("duplicate method label `{}`; set `name` to tell them apart", m.label()));
            }
        }
        Ok(())
    }

    pub fn load_instances(&self) -> Result<Vec<Instance>, BenchError> {
        let instances = match &self.instances {
            InstanceSource::Generator { seed, count, first_index } => {
                let gen = self.generator(*seed);
                (0..*count as u64)
                    .map(|i| gen.generate(first_index + i))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| BenchError::Config(e.to_string()))?
            }
            InstanceSource::File(f) => read_batch(f).map_err(|e| BenchError::Config(format!("{}: {e}", f.display())))?,
        };
        if instances.is_empty() {
            return Err(BenchError::Config("instance set is empty".into()));
        }
        if let Some(i) = instances.iter().position(|i| i.kind() != self.problem.kind) {
            return Err(BenchError::Config(format!("instance {i} is {}, expected {}", instances[i].kind(), self.problem.kind)));
        }
        Ok(instances)
    }

    pub fn load_policy(&self) -> Result<CombinedPolicy, BenchError> {
        let policy = match &self.policy {
            Some(p) => read_checkpoint(p).map_err(|e| BenchError::Config(format!("{}: {e}", p.display())))?,
            None => CombinedPolicy::base(PolicyParams::initial(self.problem.kind)),
        };
        let want = PolicyParams::initial(self.problem.kind).theta.len();
        if policy.feature_len() != want {
            return Err(BenchError::Config(format!(
                "checkpoint has {} weights, {} needs {want}",
                policy.feature_len(),
                self.problem.kind
            )));
        }
        Ok(policy)
    }
}
