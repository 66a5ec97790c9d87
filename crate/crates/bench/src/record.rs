//! Run records and their on-disk layout.
//!
//! ```text
//! <out>/config.toml
//! <out>/truth/seed-<s>.csv        n, x0 .. x{d-1}       (n = 0..T)
//! <out>/obs/seed-<s>.csv          n, y0 .. y{p-1}       (observed n only)
//! <out>/reference/seed-<s>.csv    n, x0 .. x{d-1}
//! <out>/records/<filter>/seed-<s>/record.json
//!                                 estimates.csv, errors.csv,
//!                                 diagnostics.jsonl, timing.json
//! <out>/summary.json
//! ```
//!
//! Matrices are comma separated with every float written as `{:.16e}`
//! (17 significant digits), which reads back bit for bit.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use lagpf::lagged::StepDiagnostics;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// One line of `diagnostics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepLog {
    Lagged(StepDiagnostics),
    Ensemble {
        n: usize,
        observed: bool,
        /// Mean over coordinates of the ensemble variance after the step.
        mean_variance: f64,
        wall_ms: f64,
    },
    Kalman {
        n: usize,
        observed: bool,
        mean_variance: f64,
        wall_ms: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    /// The filter aborted while advancing to time `step`.
    Failed { step: usize, message: String },
}

impl RunStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RunStatus::Ok)
    }
}

/// Output of one (seed, filter) run. `estimates` has `T + 1` rows when the
/// run succeeded and stops at the last completed time otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub meta: RecordMeta,
    pub estimates: Vec<Vec<f64>>,
    pub diagnostics: Vec<StepLog>,
    pub wall_ms: f64,
}

/// Contents of `record.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub config_hash: String,
    pub experiment: String,
    pub filter: String,
    pub seed: u64,
    pub dim: usize,
    pub steps: usize,
    /// Path of the truth trajectory relative to the output directory.
    pub truth: String,
    #[serde(flatten)]
    pub status: RunStatus,
    /// Predictor variances raised to the floor (ETKF-SQRT mu only).
    #[serde(default)]
    pub mu_floor_events: usize,
}

pub fn truth_path(out: &Path, seed: u64) -> PathBuf {
    out.join("truth").join(format!("seed-{seed}.csv"))
}

pub fn obs_path(out: &Path, seed: u64) -> PathBuf {
    out.join("obs").join(format!("seed-{seed}.csv"))
}

pub fn reference_path(out: &Path, seed: u64) -> PathBuf {
    out.join("reference").join(format!("seed-{seed}.csv"))
}

pub fn record_dir(out: &Path, filter: &str, seed: u64) -> PathBuf {
    out.join("records").join(filter).join(format!("seed-{seed}"))
}

pub fn summary_path(out: &Path) -> PathBuf {
    out.join("summary.json")
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    }
    Ok(())
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes rows `(n, values...)`; `prefix` names the value columns.
pub fn write_matrix<'a, I>(path: &Path, prefix: &str, width: usize, rows: I) -> Result<()>
where
    I: IntoIterator<Item = (usize, &'a [f64])>,
{
    create_parent(path)?;
    let csv_err = |e: csv::Error| BenchError::format(path, e);
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["n".to_string()];
    header.extend((0..width).map(|i| format!("{prefix}{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (n, row) in rows {
        if row.len() != width {
            return Err(BenchError::format(path, format!("row {n} has {} values, expected {width}", row.len())));
        }
        let mut rec = vec![n.to_string()];
        rec.extend(row.iter().map(|&x| fmt_f64(x)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

/// Reads a matrix written by [`write_matrix`]: time indices and rows.
pub fn read_matrix(path: &Path) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| BenchError::format(path, e))?;
    let width = r.headers().map_err(|e| BenchError::format(path, e))?.len();
    if width == 0 {
        return Err(BenchError::format(path, "missing header"));
    }
    let (mut ns, mut rows) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| BenchError::format(path, e))?;
        let bad = |msg: String| BenchError::format(path, format!("data row {}: {msg}", line + 1));
        let n: usize = rec[0].parse().map_err(|e| bad(format!("time index: {e}")))?;
        let row = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|e| bad(format!("'{s}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        ns.push(n);
        rows.push(row);
    }
    Ok((ns, rows))
}

/// Reads a dense `0..=T` trajectory and checks its time column.
pub fn read_trajectory(path: &Path) -> Result<Vec<Vec<f64>>> {
    let (ns, rows) = read_matrix(path)?;
    if ns.iter().enumerate().any(|(i, &n)| i != n) {
        return Err(BenchError::format(path, "time column must be 0, 1, 2, ..."));
    }
    Ok(rows)
}

/// Writes `x_{0:T}` as a trajectory file.
pub fn write_trajectory(path: &Path, prefix: &str, rows: &[Vec<f64>]) -> Result<()> {
    let width = rows.first().map_or(0, Vec::len);
    write_matrix(path, prefix, width, rows.iter().enumerate().map(|(n, r)| (n, r.as_slice())))
}

/// Writes observed times only.
pub fn write_observations(path: &Path, obs: &[Option<Vec<f64>>], dim_y: usize) -> Result<()> {
    write_matrix(
        path,
        "y",
        dim_y,
        obs.iter()
            .enumerate()
            .filter_map(|(n, y)| y.as_ref().map(|y| (n, y.as_slice()))),
    )
}

/// Inverse of [`write_observations`] for a run of `steps` steps.
pub fn read_observations(path: &Path, steps: usize) -> Result<Vec<Option<Vec<f64>>>> {
    let (ns, rows) = read_matrix(path)?;
    let mut obs = vec![None; steps + 1];
    for (n, y) in ns.into_iter().zip(rows) {
        if n == 0 || n > steps {
            return Err(BenchError::format(path, format!("observation time {n} outside 1..={steps}")));
        }
        obs[n] = Some(y);
    }
    Ok(obs)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut s = serde_json::to_string_pretty(value).map_err(|e| BenchError::format(path, e))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| BenchError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| BenchError::format(path, e))
}

pub fn write_diagnostics(path: &Path, logs: &[StepLog]) -> Result<()> {
    create_parent(path)?;
    let file = File::create(path).map_err(|e| BenchError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for log in logs {
        serde_json::to_writer(&mut w, log).map_err(|e| BenchError::format(path, e))?;
        w.write_all(b"\n").map_err(|e| BenchError::io(path, e))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<StepLog>> {
    let file = File::open(path).map_err(|e| BenchError::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| BenchError::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(|e| BenchError::format(path, e))?);
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct Timing {
    wall_ms: f64,
}

impl RunRecord {
    /// Writes everything except the error matrix, which depends on the reference.
    pub fn save(&self, out: &Path) -> Result<PathBuf> {
        let dir = record_dir(out, &self.meta.filter, self.meta.seed);
        fs::create_dir_all(&dir).map_err(|e| BenchError::io(&dir, e))?;
        write_json(&dir.join("record.json"), &self.meta)?;
        write_matrix(
            &dir.join("estimates.csv"),
            "x",
            self.meta.dim,
            self.estimates.iter().enumerate().map(|(n, r)| (n, r.as_slice())),
        )?;
        write_diagnostics(&dir.join("diagnostics.jsonl"), &self.diagnostics)?;
        write_json(&dir.join("timing.json"), &Timing { wall_ms: self.wall_ms })?;
        Ok(dir)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: RecordMeta = read_json(&dir.join("record.json"))?;
        let estimates = read_trajectory(&dir.join("estimates.csv"))?;
        let diagnostics = read_diagnostics(&dir.join("diagnostics.jsonl"))?;
        let wall_ms = read_json::<Timing>(&dir.join("timing.json")).map_or(f64::NAN, |t| t.wall_ms);
        Ok(Self {
            meta,
            estimates,
            diagnostics,
            wall_ms,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let rows = vec![
            vec![0.1, -1.0 / 3.0, f64::MIN_POSITIVE],
            vec![1e300, -0.0, std::f64::consts::PI],
        ];
        write_trajectory(&p, "x", &rows).unwrap();
        let back = read_trajectory(&p).unwrap();
        for (a, b) in rows.iter().flatten().zip(back.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("n,x0,x1,x2\n0,1.0000000000000001e-1,"));
    }

    #[test]
    fn observations_keep_their_times() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("y.csv");
        let obs = vec![None, None, Some(vec![1.0]), None, Some(vec![2.5])];
        write_observations(&p, &obs, 1).unwrap();
        assert_eq!(read_observations(&p, 4).unwrap(), obs);
        assert!(read_observations(&p, 3).is_err());
    }

    #[test]
    fn step_logs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let logs = vec![
            StepLog::Kalman {
                n: 1,
                observed: true,
                mean_variance: 0.25,
                wall_ms: 0.5,
            },
            StepLog::Ensemble {
                n: 2,
                observed: false,
                mean_variance: 1.5,
                wall_ms: 0.1,
            },
        ];
        write_diagnostics(&p, &logs).unwrap();
        assert_eq!(read_diagnostics(&p).unwrap(), logs);
        let first = fs::read_to_string(&p).unwrap();
        assert!(first.starts_with("{\"kind\":\"kalman\""));
    }
}
