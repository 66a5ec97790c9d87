//! Seeded multi-replicate runs of every configured filter.

use std::path::{Path, PathBuf};
use std::time::Instant;

use lagpf::baselines::{
    ensemble_analysis, ensemble_forecast, kalman_filter, kalman_predict, kalman_update, EnsembleKind, EnsembleState,
    KalmanState,
};
use lagpf::lagged::{LaggedConfig, LaggedFilter, PredictorSource};
use lagpf::{SsmDefinition, StateSpaceModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, FilterSpec, ReferenceKind, SLOW_RUN_THRESHOLD};
use crate::data::{generate_for, BuiltModel, TwinData};
use crate::error::{BenchError, Result};
use crate::metrics::{
    error_histogram, fraction_below, median, relative_abs_error, relative_l2_error, time_averaged_relative_l2,
    Histogram,
};
use crate::record::{
    obs_path, read_observations, read_trajectory, record_dir, reference_path, summary_path, truth_path,
    write_json, write_observations, write_trajectory, write_matrix, RecordMeta, RunRecord, RunStatus, StepLog,
};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
    /// Where to persist records; nothing is written when `None`.
    pub out: Option<PathBuf>,
}

/// Metrics of one record against its reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub filter: String,
    pub seed: u64,
    #[serde(flatten)]
    pub status: RunStatus,
    pub relative_l2: Option<f64>,
    pub time_averaged_relative_l2: Option<f64>,
    pub median_relative_abs_error: Option<f64>,
    pub fraction_below_0_01: Option<f64>,
    /// Entries whose reference magnitude fell below the error floor.
    pub floored: Option<usize>,
    pub histogram: Option<Histogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub filter: String,
    pub runs: usize,
    pub failed: usize,
    pub median_relative_l2: Option<f64>,
    pub mean_relative_l2: Option<f64>,
    pub max_relative_l2: Option<f64>,
    /// Histogram of the relative absolute errors of all successful runs pooled.
    pub histogram: Option<Histogram>,
}

/// Contents of `summary.json`. Holds no timing so reruns compare byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment: String,
    pub config_hash: String,
    pub reference: ReferenceKind,
    pub error_floor: f64,
    pub filters: Vec<FilterSummary>,
    pub records: Vec<RecordSummary>,
}

impl ExperimentSummary {
    pub fn filter(&self, name: &str) -> Option<&FilterSummary> {
        self.filters.iter().find(|f| f.filter == name)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| BenchError::Metric(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    pub summary: ExperimentSummary,
    pub data: Vec<TwinData>,
    pub references: Vec<Vec<Vec<f64>>>,
    pub warnings: Vec<String>,
}

/// How a finished experiment went, as distinguished by the CLI exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completion {
    Success,
    Partial,
    Failed,
}

impl ExperimentOutcome {
    pub fn failed(&self) -> usize {
        self.records.iter().filter(|r| !r.meta.status.is_ok()).count()
    }

    pub fn completion(&self) -> Completion {
        match self.failed() {
            0 => Completion::Success,
            f if f == self.records.len() => Completion::Failed,
            _ => Completion::Partial,
        }
    }
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| BenchError::Config(format!("thread pool: {e}")))
}

/// Reference trajectory for one seed.
pub fn reference_for(cfg: &ExperimentConfig, model: &BuiltModel, data: &TwinData) -> Result<Vec<Vec<f64>>> {
    match cfg.reference() {
        ReferenceKind::Kalman => {
            let m = model
                .gaussian()
                .ok_or_else(|| BenchError::Config("Kalman reference needs a Gaussian model".into()))?;
            Ok(kalman_filter(m, &data.obs)?.filter_means)
        }
        _ => Ok(data.truth.clone()),
    }
}

/// Twin data for every seed, generated in parallel.
pub fn generate_all(cfg: &ExperimentConfig, model: &BuiltModel, threads: Option<usize>) -> Result<Vec<TwinData>> {
    pool(threads)?.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&s| generate_for(model, cfg.steps, s))
            .collect()
    })
}

/// Writes `config.toml`, truth and observation files.
pub fn save_data(cfg: &ExperimentConfig, model: &BuiltModel, data: &[TwinData], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| BenchError::io(out, e))?;
    let cfg_path = out.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml_string()?).map_err(|e| BenchError::io(&cfg_path, e))?;
    for (&seed, d) in cfg.seeds.iter().zip(data) {
        write_trajectory(&truth_path(out, seed), "x", &d.truth)?;
        write_observations(&obs_path(out, seed), &d.obs, model.dim_y())?;
    }
    Ok(())
}

/// Runs every (seed, filter) pair. Filter failures end up in the records;
/// only invalid configs and I/O problems are returned as errors.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let hash = cfg.hash()?;
    let model = BuiltModel::build(&cfg.model)?;
    let mut warnings = Vec::new();
    let work = cfg.estimated_work();
    if work > SLOW_RUN_THRESHOLD {
        warnings.push(format!(
            "estimated work {work:.2e} coordinate updates exceeds {SLOW_RUN_THRESHOLD:.0e}; expect a long run"
        ));
    }

    let data = generate_all(cfg, &model, opts.threads)?;
    let pool = pool(opts.threads)?;
    let references = pool.install(|| {
        data.par_iter()
            .map(|d| reference_for(cfg, &model, d))
            .collect::<Result<Vec<_>>>()
    })?;

    let tasks: Vec<(usize, usize)> = (0..cfg.filters.len())
        .flat_map(|f| (0..cfg.seeds.len()).map(move |s| (f, s)))
        .collect();
    let records: Vec<RunRecord> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(f, s)| {
                let seed = cfg.seeds[s];
                let meta = RecordMeta {
                    config_hash: hash.clone(),
                    experiment: cfg.name.clone(),
                    filter: cfg.filters[f].name(),
                    seed,
                    dim: model.dim_x(),
                    steps: cfg.steps,
                    truth: format!("truth/seed-{seed}.csv"),
                    status: RunStatus::Ok,
                    mu_floor_events: 0,
                };
                run_single(&model, &cfg.filters[f], &data[s], meta)
            })
            .collect()
    });

    let summary = summarize(cfg, &hash, &records, &references)?;
    if let Some(out) = &opts.out {
        save_data(cfg, &model, &data, out)?;
        for (&seed, r) in cfg.seeds.iter().zip(&references) {
            write_trajectory(&reference_path(out, seed), "x", r)?;
        }
        for rec in &records {
            rec.save(out)?;
        }
        write_errors(cfg, &records, &references, out)?;
        write_json(&summary_path(out), &summary)?;
    }
    Ok(ExperimentOutcome {
        records,
        summary,
        data,
        references,
        warnings,
    })
}

/// Runs one filter on one data set. Never fails: aborts become a failed status.
pub fn run_single(model: &BuiltModel, spec: &FilterSpec, data: &TwinData, mut meta: RecordMeta) -> RunRecord {
    let clock = Instant::now();
    let seed = meta.seed;
    let mut estimates = vec![data.truth[0].clone()];
    let mut logs = Vec::new();
    let status = match spec {
        FilterSpec::Lagged { .. } => {
            let (cfg, mu) = spec.lagged_config().expect("lagged spec");
            match mu.tracker(model.gaussian(), seed) {
                Err(e) => RunStatus::Failed {
                    step: 0,
                    message: e.to_string(),
                },
                Ok(tracker) => {
                    let (status, floors) = match model {
                        BuiltModel::Gaussian(m) => run_lagged(m, cfg, tracker, data, seed, &mut estimates, &mut logs),
                        BuiltModel::Factorized(m) => {
                            run_lagged(m, cfg, tracker, data, seed, &mut estimates, &mut logs)
                        }
                    };
                    meta.mu_floor_events = floors;
                    status
                }
            }
        }
        FilterSpec::Kalman { .. } => match model.gaussian() {
            Some(m) => run_kalman(m, data, &mut estimates, &mut logs),
            None => RunStatus::Failed {
                step: 0,
                message: "the Kalman filter needs a Gaussian model".into(),
            },
        },
        _ => {
            let (kind, members) = spec.ensemble_kind().expect("ensemble spec");
            match model.gaussian() {
                Some(m) => run_ensemble(m, kind, members, data, seed, &mut estimates, &mut logs),
                None => RunStatus::Failed {
                    step: 0,
                    message: "ensemble filters need a Gaussian model".into(),
                },
            }
        }
    };
    meta.status = status;
    RunRecord {
        meta,
        estimates,
        diagnostics: logs,
        wall_ms: clock.elapsed().as_secs_f64() * 1e3,
    }
}

fn run_lagged<M: StateSpaceModel>(
    model: &M,
    cfg: LaggedConfig,
    tracker: Box<dyn PredictorSource>,
    data: &TwinData,
    seed: u64,
    estimates: &mut Vec<Vec<f64>>,
    logs: &mut Vec<StepLog>,
) -> (RunStatus, usize) {
    let mut filter = match LaggedFilter::new(model, cfg, tracker, seed) {
        Ok(f) => f,
        Err(e) => {
            return (
                RunStatus::Failed {
                    step: 0,
                    message: e.to_string(),
                },
                0,
            )
        }
    };
    for (n, y) in data.obs.iter().enumerate().skip(1) {
        let res = filter
            .step(y.as_deref())
            .and_then(|diag| Ok((diag, filter.filter_mean()?)));
        match res {
            Ok((diag, mean)) => {
                logs.push(StepLog::Lagged(diag));
                estimates.push(mean);
            }
            Err(e) => {
                let step = RunStatus::Failed {
                    step: n,
                    message: e.to_string(),
                };
                return (step, filter.mu_floor_events());
            }
        }
    }
    (RunStatus::Ok, filter.mu_floor_events())
}

fn run_kalman(
    model: &SsmDefinition,
    data: &TwinData,
    estimates: &mut Vec<Vec<f64>>,
    logs: &mut Vec<StepLog>,
) -> RunStatus {
    let mut state = match KalmanState::point(model.x0()) {
        Ok(s) => s,
        Err(e) => {
            return RunStatus::Failed {
                step: 0,
                message: e.to_string(),
            }
        }
    };
    let d = model.dim_x() as f64;
    for (n, y) in data.obs.iter().enumerate().skip(1) {
        let clock = Instant::now();
        let next = kalman_predict(&state, model).and_then(|p| match y {
            Some(y) => kalman_update(&p, y, model),
            None => Ok(p),
        });
        match next {
            Ok(s) => state = s,
            Err(e) => {
                return RunStatus::Failed {
                    step: n,
                    message: e.to_string(),
                }
            }
        }
        estimates.push(state.mean.as_slice().to_vec());
        logs.push(StepLog::Kalman {
            n,
            observed: y.is_some(),
            mean_variance: state.cov.trace() / d,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
    }
    RunStatus::Ok
}

fn run_ensemble(
    model: &SsmDefinition,
    kind: EnsembleKind,
    members: usize,
    data: &TwinData,
    seed: u64,
    estimates: &mut Vec<Vec<f64>>,
    logs: &mut Vec<StepLog>,
) -> RunStatus {
    let mut es = match EnsembleState::replicate(model.x0(), members) {
        Ok(s) => s,
        Err(e) => {
            return RunStatus::Failed {
                step: 0,
                message: e.to_string(),
            }
        }
    };
    for (n, y) in data.obs.iter().enumerate().skip(1) {
        let clock = Instant::now();
        let next = ensemble_forecast(&es, model, n, seed).and_then(|fc| match y {
            Some(y) => ensemble_analysis(kind, &fc, y, model, n, seed),
            None => Ok(fc),
        });
        match next {
            Ok(s) => es = s,
            Err(e) => {
                return RunStatus::Failed {
                    step: n,
                    message: e.to_string(),
                }
            }
        }
        let mean = es.mean();
        if mean.iter().any(|v| !v.is_finite()) {
            return RunStatus::Failed {
                step: n,
                message: "ensemble mean is not finite".into(),
            };
        }
        let var = es.variances();
        estimates.push(mean);
        logs.push(StepLog::Ensemble {
            n,
            observed: y.is_some(),
            mean_variance: var.iter().sum::<f64>() / var.len() as f64,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
    }
    RunStatus::Ok
}

fn seed_index(cfg: &ExperimentConfig, seed: u64) -> Result<usize> {
    cfg.seeds
        .iter()
        .position(|&s| s == seed)
        .ok_or_else(|| BenchError::Metric(format!("record seed {seed} is not in the config")))
}

/// Metrics of one record; failed or truncated runs get no numbers.
pub fn summarize_record(cfg: &ExperimentConfig, rec: &RunRecord, reference: &[Vec<f64>]) -> Result<RecordSummary> {
    let mut s = RecordSummary {
        filter: rec.meta.filter.clone(),
        seed: rec.meta.seed,
        status: rec.meta.status.clone(),
        relative_l2: None,
        time_averaged_relative_l2: None,
        median_relative_abs_error: None,
        fraction_below_0_01: None,
        floored: None,
        histogram: None,
    };
    if !rec.meta.status.is_ok() {
        return Ok(s);
    }
    let err = relative_abs_error(&rec.estimates, reference, cfg.error_floor)?;
    let flat: Vec<f64> = err.values.iter().flatten().copied().collect();
    s.relative_l2 = Some(relative_l2_error(&rec.estimates, reference)?);
    s.time_averaged_relative_l2 = time_averaged_relative_l2(&rec.estimates, reference).ok();
    s.median_relative_abs_error = median(&flat);
    s.fraction_below_0_01 = Some(fraction_below(&err.values, 0.01));
    s.floored = Some(err.floored);
    s.histogram = error_histogram(&err.values, &cfg.histogram.edges()).ok();
    Ok(s)
}

/// Per-record and per-filter metrics; records may come in any order.
pub fn summarize(
    cfg: &ExperimentConfig,
    hash: &str,
    records: &[RunRecord],
    references: &[Vec<Vec<f64>>],
) -> Result<ExperimentSummary> {
    let mut rec_summaries = Vec::with_capacity(records.len());
    let mut filters = Vec::with_capacity(cfg.filters.len());
    for spec in &cfg.filters {
        let name = spec.name();
        let mut mine: Vec<&RunRecord> = records.iter().filter(|r| r.meta.filter == name).collect();
        mine.sort_by_key(|r| seed_index(cfg, r.meta.seed).unwrap_or(usize::MAX));
        let mut l2 = Vec::new();
        let mut pooled = Vec::new();
        let mut failed = 0;
        for rec in &mine {
            let reference = &references[seed_index(cfg, rec.meta.seed)?];
            let s = summarize_record(cfg, rec, reference)?;
            match s.relative_l2 {
                Some(v) => {
                    l2.push(v);
                    pooled.extend(relative_abs_error(&rec.estimates, reference, cfg.error_floor)?.values);
                }
                None => failed += 1,
            }
            rec_summaries.push(s);
        }
        filters.push(FilterSummary {
            filter: name,
            runs: mine.len(),
            failed,
            median_relative_l2: median(&l2),
            mean_relative_l2: (!l2.is_empty()).then(|| l2.iter().sum::<f64>() / l2.len() as f64),
            max_relative_l2: l2.iter().copied().reduce(f64::max),
            histogram: if pooled.is_empty() {
                None
            } else {
                error_histogram(&pooled, &cfg.histogram.edges()).ok()
            },
        });
    }
    Ok(ExperimentSummary {
        experiment: cfg.name.clone(),
        config_hash: hash.to_string(),
        reference: cfg.reference(),
        error_floor: cfg.error_floor,
        filters,
        records: rec_summaries,
    })
}

fn write_errors(cfg: &ExperimentConfig, records: &[RunRecord], references: &[Vec<Vec<f64>>], out: &Path) -> Result<()> {
    for rec in records.iter().filter(|r| r.meta.status.is_ok()) {
        let reference = &references[seed_index(cfg, rec.meta.seed)?];
        let err = relative_abs_error(&rec.estimates, reference, cfg.error_floor)?;
        let path = record_dir(out, &rec.meta.filter, rec.meta.seed).join("errors.csv");
        write_matrix(
            &path,
            "e",
            rec.meta.dim,
            err.values.iter().enumerate().map(|(n, r)| (n, r.as_slice())),
        )?;
    }
    Ok(())
}

/// Recomputes `summary.json` and the error matrices from a stored run directory.
pub fn recompute_metrics(out: &Path) -> Result<ExperimentSummary> {
    let cfg = ExperimentConfig::load(&out.join("config.toml"))?;
    let hash = cfg.hash()?;
    let mut references = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let path = reference_path(out, seed);
        let reference = if path.exists() {
            read_trajectory(&path)?
        } else if cfg.reference() == ReferenceKind::Truth {
            read_trajectory(&truth_path(out, seed))?
        } else {
            let model = BuiltModel::build(&cfg.model)?;
            let data = TwinData {
                truth: read_trajectory(&truth_path(out, seed))?,
                obs: read_observations(&obs_path(out, seed), cfg.steps)?,
            };
            reference_for(&cfg, &model, &data)?
        };
        references.push(reference);
    }
    let mut records = Vec::new();
    for spec in &cfg.filters {
        for &seed in &cfg.seeds {
            let rec = RunRecord::load(&record_dir(out, &spec.name(), seed))?;
            if rec.meta.config_hash != hash {
                return Err(BenchError::format(
                    record_dir(out, &spec.name(), seed),
                    "record was produced by a different config",
                ));
            }
            records.push(rec);
        }
    }
    let summary = summarize(&cfg, &hash, &records, &references)?;
    write_errors(&cfg, &records, &references, out)?;
    write_json(&summary_path(out), &summary)?;
    Ok(summary)
}
