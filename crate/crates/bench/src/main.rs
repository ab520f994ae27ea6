use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sgbs_bench::{commands, write_compare, BenchError, ExperimentConfig, Overrides, EXIT_DIVERGED};

/// Benchmark harness for simulation-guided beam search.
///
/// Worker threads default to the CPU count; set SGBS_WORKERS to override.
#[derive(Parser)]
#[command(name = "sgbs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Candidate-solution budget per method and instance.
    #[arg(long)]
    budget: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded instance set with manifest and oracle costs.
    Generate(Common),
    /// Pretrain the base policy and select a checkpoint.
    Pretrain(Common),
    /// Solve an instance set with one method.
    Solve(Common),
    /// Compare methods under one candidate budget.
    Compare(Common),
    /// Sweep SGBS over a (beta, gamma) grid.
    Sweep(Common),
}

fn setup_workers() -> Result<(), BenchError> {
    let Ok(v) = std::env::var("SGBS_WORKERS") else { return Ok(()) };
    let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| BenchError::Config(format!("SGBS_WORKERS={v} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| BenchError::Run(e.to_string()))
}

fn load(c: &Common) -> Result<ExperimentConfig, BenchError> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    cfg.apply(&Overrides { seed: c.seed, budget: c.budget, out: c.out.clone() });
    cfg.validate()?;
    Ok(cfg)
}

fn summarize(report: &sgbs_bench::GapReport) {
    for s in &report.summary {
        let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.6}"));
        println!(
            "{:<20} mean cost {:>12}  gap {:>9}%  candidates {:>10}  diverged {}",
            s.method,
            f(s.mean_cost),
            f(s.mean_gap_percent),
            f(s.mean_candidates),
            s.diverged
        );
    }
}

fn run(cli: Cli) -> Result<i32, BenchError> {
    setup_workers()?;
    let report = match &cli.command {
        Command::Generate(c) => {
            let cfg = load(c)?;
            let m = commands::generate(&cfg)?;
            println!("wrote {} {} instances to {}", m.count, m.kind, cfg.out.display());
            return Ok(0);
        }
        Command::Pretrain(c) => {
            let cfg = load(c)?;
            let r = commands::pretrain(&cfg)?;
            println!("epoch 0: greedy {:.6}", r.initial.mean_greedy_cost);
            for e in &r.curve {
                println!("epoch {}: greedy {:.6} entropy {:.6} probe {:.6}", e.point.epoch, e.point.mean_greedy_cost, e.point.mean_entropy, e.probe_score);
            }
            println!("selected epoch {}", r.selected_epoch);
            return Ok(0);
        }
        Command::Sweep(c) => {
            let cfg = load(c)?;
            for r in commands::sweep(&cfg)? {
                println!("({},{}) mean cost {:.6} rollouts {:.1}", r.beta, r.gamma, r.mean_cost, r.mean_rollouts);
            }
            return Ok(0);
        }
        Command::Solve(c) => commands::solve(&load(c)?)?.report,
        Command::Compare(c) => {
            let cfg = load(c)?;
            let out = commands::compare(&cfg)?;
            write_compare(&out, &cfg.out)?;
            out.report
        }
    };
    summarize(&report);
    Ok(if report.divergences() > 0 { EXIT_DIVERGED } else { 0 })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
