use std::fs;

use lagpf_bench::config::ExperimentConfig;
use lagpf_bench::record::{read_trajectory, record_dir, summary_path, RunRecord, RunStatus, StepLog};
use lagpf_bench::runner::recompute_metrics;
use lagpf_bench::{run_experiment, Completion, RunOptions};

const CFG: &str = r#"
name = "tiny"
steps = 6
seeds = [3, 8]

[model]
kind = "linear-gaussian"
d = 3
r1_sqrt = 0.7
r2_sqrt = 0.3
x0 = 1.5

[[filters]]
kind = "lagged"
particles = 40
lag = 2
sweeps = 3
mu = { kind = "kalman-predictor" }

[[filters]]
kind = "enkf"
members = 30
"#;

fn tiny() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(CFG).unwrap()
}

#[test]
fn one_record_per_seed_and_filter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let out = run_experiment(
        &cfg,
        &RunOptions {
            threads: Some(1),
            out: Some(dir.path().to_path_buf()),
        },
    )
    .unwrap();
    assert_eq!(out.records.len(), 4);
    assert_eq!(out.completion(), Completion::Success);
    let hash = cfg.hash().unwrap();
    for rec in &out.records {
        assert_eq!(rec.meta.config_hash, hash);
        assert_eq!(rec.estimates.len(), cfg.steps + 1);
        assert!(rec.estimates.iter().all(|r| r.len() == 3));
        assert_eq!(rec.diagnostics.len(), cfg.steps);
        assert!(cfg.seeds.contains(&rec.meta.seed));
        let back = RunRecord::load(&record_dir(dir.path(), &rec.meta.filter, rec.meta.seed)).unwrap();
        assert_eq!(back.meta, rec.meta);
        assert_eq!(back.estimates, rec.estimates);
        assert_eq!(back.diagnostics, rec.diagnostics);
    }
    let lpf = out.records.iter().find(|r| r.meta.filter == "lpf").unwrap();
    assert!(matches!(lpf.diagnostics[0], StepLog::Lagged(_)));
    assert_eq!(out.summary.records.len(), 4);
    assert!(out.summary.filter("enkf").unwrap().median_relative_l2.unwrap() < 0.5);

    for &seed in &cfg.seeds {
        let truth = read_trajectory(&dir.path().join(format!("truth/seed-{seed}.csv"))).unwrap();
        assert_eq!(truth.len(), cfg.steps + 1);
        let errs = read_trajectory(&record_dir(dir.path(), "lpf", seed).join("errors.csv")).unwrap();
        assert_eq!(errs.len(), cfg.steps + 1);
    }
}

#[test]
fn metrics_recomputation_reproduces_the_summary_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        threads: Some(1),
        out: Some(dir.path().to_path_buf()),
    };
    run_experiment(&tiny(), &opts).unwrap();
    let written = fs::read(summary_path(dir.path())).unwrap();
    let errors = fs::read(record_dir(dir.path(), "lpf", 3).join("errors.csv")).unwrap();
    fs::remove_file(summary_path(dir.path())).unwrap();
    recompute_metrics(dir.path()).unwrap();
    assert_eq!(fs::read(summary_path(dir.path())).unwrap(), written);
    assert_eq!(fs::read(record_dir(dir.path(), "lpf", 3).join("errors.csv")).unwrap(), errors);
}

#[test]
fn same_seed_gives_identical_summaries_and_offsets_change_them() {
    let opts = RunOptions {
        threads: Some(1),
        out: None,
    };
    let a = run_experiment(&tiny(), &opts).unwrap().summary.to_json().unwrap();
    let b = run_experiment(&tiny(), &opts).unwrap().summary.to_json().unwrap();
    assert_eq!(a, b);
    let c = run_experiment(&tiny().with_seed_offset(100), &opts).unwrap().summary.to_json().unwrap();
    assert_ne!(a, c);
}

#[test]
fn failing_filter_is_recorded_and_the_rest_still_run() {
    // The triangular ETKF refuses ensembles above its member limit at the first analysis.
    let text = CFG.replace("kind = \"enkf\"\nmembers = 30", "kind = \"etkf\"\nmembers = 4001");
    let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    let out = run_experiment(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(out.records.len(), 4);
    assert_eq!(out.completion(), Completion::Partial);
    for rec in &out.records {
        match rec.meta.filter.as_str() {
            "etkf" => assert!(matches!(rec.meta.status, RunStatus::Failed { step: 1, .. })),
            _ => assert!(rec.meta.status.is_ok()),
        }
    }
    let etkf = out.summary.filter("etkf").unwrap();
    assert_eq!((etkf.runs, etkf.failed), (2, 2));
    assert!(etkf.median_relative_l2.is_none());
}
