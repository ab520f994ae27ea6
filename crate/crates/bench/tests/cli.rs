use std::path::Path;
use std::process::Command;

fn sgbs(args: &[&str], workers: Option<&str>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sgbs"));
    cmd.args(args).env_remove("SGBS_WORKERS");
    if let Some(w) = workers {
        cmd.env("SGBS_WORKERS", w);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

const COMPARE: &str = r#"{
  "problem": { "kind": "CVRP", "size": 8 },
  "instances": { "generator": { "seed": 3, "count": 6 } },
  "methods": [ { "method": "greedy" }, { "method": "sampling" }, { "method": "sgbs", "beta": 2, "gamma": 3 },
               { "method": "sgbs+eas", "samples": 8 } ],
  "budget": 150,
  "seed": 17
}"#;

#[test]
fn compare_is_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), COMPARE);
    let mut reports = Vec::new();
    for (w, sub) in [("1", "a"), ("3", "b")] {
        let out_dir = dir.path().join(sub);
        let out = sgbs(&["compare", "--config", &cfg, "--out", out_dir.to_str().unwrap()], Some(w));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        reports.push(std::fs::read(out_dir.join("report.json")).unwrap());
        assert!(out_dir.join("timing.json").is_file());
        assert!(out_dir.join("curves/mean.csv").is_file());
        assert!(out_dir.join("adaptation/03_sgbs_4_4__eas/instance_000.csv").is_file());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn seed_override_changes_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), COMPARE);
    let read = |seed: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = sgbs(&["compare", "--config", &cfg, "--seed", seed, "--budget", "40", "--out", out_dir.to_str().unwrap()], None);
        assert!(out.status.success());
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
        assert_eq!(v["budget"], 40);
        assert_eq!(v["seed"], seed.parse::<u64>().unwrap());
        v["instances"].clone()
    };
    assert_ne!(read("1", "a"), read("2", "b"));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), COMPARE);
    assert_eq!(sgbs(&["compare", "--config", &cfg, "--budget", "0"], None).status.code(), Some(2));
    assert_eq!(sgbs(&["compare", "--config", "/nonexistent.json"], None).status.code(), Some(2));
    assert_eq!(sgbs(&["compare", "--config", &cfg], Some("zero")).status.code(), Some(2));
    let broken = write_config(dir.path(), "{ \"problem\": ");
    assert_eq!(sgbs(&["compare", "--config", &broken], None).status.code(), Some(2));
    let missing = write_config(
        dir.path(),
        r#"{ "problem": { "kind": "TSP", "size": 5 }, "instances": { "file": "nope.txt" }, "methods": [ { "method": "greedy" } ] }"#,
    );
    assert_eq!(sgbs(&["compare", "--config", &missing], None).status.code(), Some(2));
    let augmented_ffsp = write_config(
        dir.path(),
        r#"{ "problem": { "kind": "FFSP", "size": 5 }, "instances": { "generator": { "seed": 1, "count": 1 } },
             "methods": [ { "method": "greedy" } ], "augment": true }"#,
    );
    assert_eq!(sgbs(&["solve", "--config", &augmented_ffsp], None).status.code(), Some(2));
}

#[test]
fn divergence_exits_with_3_and_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "problem": { "kind": "TSP", "size": 20 }, "instances": { "generator": { "seed": 1, "count": 3 } },
             "methods": [ { "method": "greedy" }, { "method": "active-search", "learning_rate": 1.7e308, "samples": 16 } ],
             "budget": 64, "out": "run" }"#,
    );
    let out = sgbs(&["compare", "--config", &cfg], None);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("run/report.json")).unwrap()).unwrap();
    assert_eq!(v["summary"][1]["diverged"], 3);
    assert_eq!(v["summary"][0]["diverged"], 0);
    assert!(v["summary"][1]["mean_cost"].is_null());
}

#[test]
fn generate_is_byte_identical_and_caches_oracle_costs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "problem": { "kind": "TSP", "size": 8 }, "instances": { "generator": { "seed": 9, "count": 5 } } }"#,
    );
    let mut files = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = dir.path().join(sub);
        assert!(sgbs(&["generate", "--config", &cfg, "--out", out_dir.to_str().unwrap()], None).status.success());
        files.push(["instances.txt", "manifest.json", "oracle.json"].map(|f| std::fs::read(out_dir.join(f)).unwrap()));
    }
    assert_eq!(files[0], files[1]);
    let manifest: serde_json::Value = serde_json::from_slice(&files[0][1]).unwrap();
    let batch = sgbs_core::problem::parse_batch(std::str::from_utf8(&files[0][0]).unwrap()).unwrap();
    assert_eq!(manifest["count"], batch.len());
}

#[test]
fn sweep_and_pretrain_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "problem": { "kind": "TSP", "size": 8 }, "instances": { "generator": { "seed": 2, "count": 4 } },
             "budget": 100,
             "sweep": { "betas": [1, 2], "gammas": [1, 3] },
             "pretrain": { "train": { "epochs": 2, "batches_per_epoch": 2, "instances_per_batch": 4, "eval_instances": 8 },
                           "probe": { "instances": 2, "budget": 30 } } }"#,
    );
    let out = sgbs(&["sweep", "--config", &cfg, "--out", dir.path().join("s").to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let grid = sgbs_bench::report::parse_grid_csv(&std::fs::read_to_string(dir.path().join("s/grid.csv")).unwrap()).unwrap();
    assert_eq!(grid.len(), 4);
    let out = sgbs(&["pretrain", "--config", &cfg, "--out", dir.path().join("p").to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["policy.ckpt", "pretrain.json", "training_curve.csv", "checkpoints/epoch_001.ckpt", "checkpoints/epoch_002.ckpt"] {
        assert!(dir.path().join("p").join(f).is_file(), "{f}");
    }
}
