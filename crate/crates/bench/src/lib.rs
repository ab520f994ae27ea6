//! Experiment harness: instance sets, pretraining runs, fair-budget method
//! comparisons and (beta, gamma) sweeps, with JSON reports and CSV curves.

pub mod commands;
pub mod config;
pub mod report;

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use commands::{compare, generate, pretrain, run_instance, solve, sweep, write_compare, CompareOutput, MethodRun};
pub use config::{ExperimentConfig, InstanceSource, MethodSpec, Overrides, ReferenceMode};
pub use report::GapReport;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Run(String),
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Exit code of a run that completed but had diverging methods.
pub const EXIT_DIVERGED: i32 = 3;

/// Seeds of instance `index`, one per augmentation variant. Entry 0 is the
/// seed of the plain run.
pub fn instance_seeds(global: u64, index: u64) -> [u64; 8] {
    let mut rng = ChaCha8Rng::seed_from_u64(global);
    rng.set_stream(index);
    std::array::from_fn(|_| rng.next_u64())
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), BenchError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| BenchError::Io { path: dir.display().to_string(), source })?;
    }
    std::fs::write(path, contents).map_err(|source| BenchError::Io { path: path.display().to_string(), source })
}

pub(crate) fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}
