//! CSV writers for metric tables and CDF point files.
//!
//! Schemas:
//!
//! - per-coflow metrics: [`METRICS_COLUMNS`], optional columns empty when
//!   not applicable;
//! - comparison: [`COMPARISON_COLUMNS`], one row per coflow, followed by
//!   the summary file written by [`write_comparison_csv`];
//! - CDF points: `value,cum_fraction`, ascending in both columns.

use std::io::Write;

use serde::Serialize;

use super::{CoflowMetrics, ComparisonReport};
use crate::Result;

pub const METRICS_COLUMNS: [&str; 11] = [
    "coflow_id",
    "arrival_ms",
    "width",
    "total_bytes",
    "bin",
    "cct_ms",
    "learn_latency_ms",
    "learn_bytes",
    "est_bytes",
    "est_error",
    "excluded_from_learning",
];

pub const COMPARISON_COLUMNS: [&str; 5] = ["coflow_id", "bin", "base_cct_ms", "subject_cct_ms", "speedup"];

pub fn write_metrics_csv<W: Write>(w: W, rows: &[CoflowMetrics]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    if rows.is_empty() {
        wr.write_record(METRICS_COLUMNS)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    baseline: &'a str,
    subject: &'a str,
    metric: &'a str,
    value: f64,
}

/// Writes the per-coflow rows to `coflows` and the aggregate ratios, including
/// one row per non-empty bin, to `summary`.
pub fn write_comparison_csv<W: Write, S: Write>(coflows: W, summary: S, report: &ComparisonReport) -> Result<()> {
    let mut wr = csv::Writer::from_writer(coflows);
    wr.write_record(COMPARISON_COLUMNS)?;
    for c in &report.coflows {
        wr.write_record([
            c.id.to_string(),
            c.bin.to_string(),
            c.base_cct.to_string(),
            c.subject_cct.to_string(),
            c.speedup.to_string(),
        ])?;
    }
    wr.flush()?;

    let mut wr = csv::Writer::from_writer(summary);
    let mut rows = vec![
        ("avg_ratio".to_string(), report.avg_ratio),
        ("p10".to_string(), report.p10),
        ("p50".to_string(), report.p50),
        ("p90".to_string(), report.p90),
    ];
    rows.extend((1..=4).filter_map(|b| report.bin_ratio(b).map(|r| (format!("bin{b}_avg_ratio"), r))));
    for (metric, value) in &rows {
        wr.serialize(SummaryRow { baseline: &report.baseline, subject: &report.subject, metric, value: *value })?;
    }
    wr.flush()?;
    Ok(())
}

/// Empirical CDF: each sorted value with the fraction of values ≤ it.
pub fn cdf_points(values: impl IntoIterator<Item = f64>) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().enumerate().map(|(i, &x)| (x, (i + 1) as f64 / n)).collect()
}

pub fn write_cdf_csv<W: Write>(w: W, points: &[(f64, f64)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["value", "cum_fraction"])?;
    for (x, f) in points {
        wr.write_record([x.to_string(), f.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}
