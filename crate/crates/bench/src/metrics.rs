//! Error metrics over `(T+1) x d` arrays (rows are times).

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

fn check_shapes(est: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<()> {
    if est.len() != reference.len() {
        return Err(BenchError::Metric(format!(
            "row count mismatch: estimate {} vs reference {}",
            est.len(),
            reference.len()
        )));
    }
    for (n, (e, r)) in est.iter().zip(reference).enumerate() {
        if e.len() != r.len() {
            return Err(BenchError::Metric(format!(
                "row {n}: estimate has {} columns, reference {}",
                e.len(),
                r.len()
            )));
        }
    }
    Ok(())
}

/// Elementwise `|est - ref| / max(|ref|, eps)` and the number of entries
/// where the floor `eps` was used.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeAbsError {
    pub values: Vec<Vec<f64>>,
    pub floored: usize,
}

pub fn relative_abs_error(est: &[Vec<f64>], reference: &[Vec<f64>], eps: f64) -> Result<RelativeAbsError> {
    check_shapes(est, reference)?;
    if !(eps > 0.0) {
        return Err(BenchError::Metric(format!("error floor must be positive, got {eps}")));
    }
    let mut floored = 0;
    let values = est
        .iter()
        .zip(reference)
        .map(|(e, r)| {
            e.iter()
                .zip(r)
                .map(|(a, b)| {
                    let den = if b.abs() < eps {
                        floored += 1;
                        eps
                    } else {
                        b.abs()
                    };
                    (a - b).abs() / den
                })
                .collect()
        })
        .collect();
    Ok(RelativeAbsError { values, floored })
}

/// `||est - ref||_F / ||ref||_F` over the whole space-time array.
pub fn relative_l2_error(est: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<f64> {
    check_shapes(est, reference)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (e, r) in est.iter().zip(reference) {
        for (a, b) in e.iter().zip(r) {
            num += (a - b) * (a - b);
            den += b * b;
        }
    }
    if !(den > 0.0) {
        return Err(BenchError::Metric("reference has zero norm".into()));
    }
    Ok((num / den).sqrt())
}

/// Mean over times `n >= 1` of `||est_n - ref_n|| / ||ref_n||`.
pub fn time_averaged_relative_l2(est: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<f64> {
    check_shapes(est, reference)?;
    if est.len() < 2 {
        return Err(BenchError::Metric("need at least one time step after n = 0".into()));
    }
    let mut total = 0.0;
    for (n, (e, r)) in est.iter().zip(reference).enumerate().skip(1) {
        total += relative_l2_error(std::slice::from_ref(e), std::slice::from_ref(r))
            .map_err(|_| BenchError::Metric(format!("reference has zero norm at time {n}")))?;
    }
    Ok(total / (est.len() - 1) as f64)
}

/// Relative bin frequencies: counts divided by the number of entries
/// `d (T+1)`. Bins are `[e_i, e_{i+1})`; values below the first edge go to
/// `underflow` and values at or above the last edge to `overflow`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub underflow: f64,
    pub overflow: f64,
    pub total: usize,
}

pub fn error_histogram(errors: &[Vec<f64>], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(BenchError::Metric("bin edges must be strictly increasing, at least two".into()));
    }
    let bins = edges.len() - 1;
    let mut counts = vec![0usize; bins];
    let (mut under, mut over, mut total) = (0usize, 0usize, 0usize);
    for v in errors.iter().flatten() {
        if !v.is_finite() {
            return Err(BenchError::Metric(format!("non-finite error value {v}")));
        }
        total += 1;
        if *v < edges[0] {
            under += 1;
        } else if *v >= edges[bins] {
            over += 1;
        } else {
            // First edge strictly above v, minus one.
            let k = edges.partition_point(|e| e <= v) - 1;
            counts[k] += 1;
        }
    }
    if total == 0 {
        return Err(BenchError::Metric("empty error array".into()));
    }
    let t = total as f64;
    Ok(Histogram {
        edges: edges.to_vec(),
        frequencies: counts.iter().map(|&c| c as f64 / t).collect(),
        underflow: under as f64 / t,
        overflow: over as f64 / t,
        total,
    })
}

/// Median of a non-empty slice (mean of the middle pair for even length).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Share of entries strictly below `threshold`.
pub fn fraction_below(errors: &[Vec<f64>], threshold: f64) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for v in errors.iter().flatten() {
        total += 1;
        if *v < threshold {
            hit += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}
