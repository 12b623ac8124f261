//! Evaluation quantities computed from completed event logs.

mod export;

use std::collections::BTreeMap;

pub use self::export::{
    cdf_points, write_cdf_csv, write_comparison_csv, write_metrics_csv, COMPARISON_COLUMNS, METRICS_COLUMNS,
};
use crate::engine::{CoflowMeta, EventLog};
use crate::sched::SchedulerKind;
use crate::trace::{CoflowId, MB};
use crate::{Error, Result};

/// Width at or below which a coflow is thin.
pub const BIN_WIDTH_LIMIT: usize = 7;
/// Total size at or below which a coflow is short.
pub const BIN_SIZE_LIMIT: u64 = 100 * MB;

/// Size/width bin: 1 short-thin, 2 short-wide, 3 long-thin, 4 long-wide.
pub fn bin_of(width: usize, total_bytes: u64) -> u8 {
    match (width > BIN_WIDTH_LIMIT, total_bytes > BIN_SIZE_LIMIT) {
        (false, false) => 1,
        (true, false) => 2,
        (false, true) => 3,
        (true, true) => 4,
    }
}

/// Linear-interpolation percentile of ascending `sorted`, `p` in [0, 100].
pub fn percentile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64))
}

fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile(&v, 50.0)
}

fn finished(log: &EventLog) -> Result<Vec<CoflowMeta>> {
    let metas = log.coflows();
    if let Some(m) = metas.iter().find(|m| m.finish_ms.is_none()) {
        return Err(Error::Param(format!("coflow {} never finished in the '{}' log", m.id, log.scheduler)));
    }
    Ok(metas)
}

/// Completion time per coflow: last flow finish minus arrival.
pub fn compute_cct(log: &EventLog) -> Result<BTreeMap<CoflowId, f64>> {
    Ok(finished(log)?.iter().map(|m| (m.id, m.cct().unwrap_or_default())).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningOverhead {
    pub id: CoflowId,
    pub latency_ms: f64,
    /// `latency_ms / cct`.
    pub fraction: f64,
    pub bytes: f64,
    /// Bypassed by the sampling scheduler, or finished in Aalo's first queue.
    pub excluded: bool,
}

/// Time and bytes each coflow spent before reaching its final priority.
///
/// For the sampling scheduler this is the pilot phase. For Aalo it is the
/// first entry into the queue the coflow occupies when it completes.
pub fn learning_overhead(log: &EventLog, kind: SchedulerKind) -> Result<Vec<LearningOverhead>> {
    let metas = finished(log)?;
    let mut out = Vec::with_capacity(metas.len());
    for m in &metas {
        let cct = m.cct().unwrap_or_default();
        let (latency, bytes, excluded) = match kind {
            SchedulerKind::Sampling => match m.pilot_done {
                Some((t, _)) if !m.bypassed => (t - m.arrival_ms, m.pilot_bytes as f64, false),
                _ => (0.0, 0.0, true),
            },
            SchedulerKind::Aalo | SchedulerKind::AaloOracle => {
                let last = m.queue_changes.last().map_or(0, |e| e.1);
                match m.queue_changes.iter().find(|e| e.1 == last) {
                    Some(&(t, q, d)) if q > 0 => (t - m.arrival_ms, d, false),
                    _ => (0.0, 0.0, true),
                }
            }
            other => return Err(Error::Param(format!("scheduler '{other}' has no learning phase"))),
        };
        out.push(LearningOverhead {
            id: m.id,
            latency_ms: latency,
            fraction: if cct > 0.0 { latency / cct } else { 0.0 },
            bytes,
            excluded,
        });
    }
    Ok(out)
}

/// Medians over non-excluded coflows: (latency ms, bytes).
pub fn learning_medians(overhead: &[LearningOverhead]) -> Option<(f64, f64)> {
    let kept: Vec<&LearningOverhead> = overhead.iter().filter(|o| !o.excluded).collect();
    let lat: Vec<f64> = kept.iter().map(|o| o.latency_ms).collect();
    let bytes: Vec<f64> = kept.iter().map(|o| o.bytes).collect();
    Some((median(&lat)?, median(&bytes)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoflowSpeedup {
    pub id: CoflowId,
    pub bin: u8,
    pub base_cct: f64,
    pub subject_cct: f64,
    /// `base_cct / subject_cct`.
    pub speedup: f64,
}

/// How much faster the subject scheduler is than the baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub baseline: String,
    pub subject: String,
    /// In arrival order.
    pub coflows: Vec<CoflowSpeedup>,
    /// Mean baseline CCT over mean subject CCT.
    pub avg_ratio: f64,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
}

impl ComparisonReport {
    /// Ratio of mean CCTs restricted to one bin, if it has coflows.
    pub fn bin_ratio(&self, bin: u8) -> Option<f64> {
        let (b, s, n) = self
            .coflows
            .iter()
            .filter(|c| c.bin == bin)
            .fold((0.0, 0.0, 0), |(b, s, n), c| (b + c.base_cct, s + c.subject_cct, n + 1));
        (n > 0).then(|| b / s)
    }
}

pub fn speedup_report(base: &EventLog, subject: &EventLog) -> Result<ComparisonReport> {
    let base_metas = finished(base)?;
    let subject_ccts = compute_cct(subject)?;
    if base_metas.len() != subject_ccts.len() {
        return Err(Error::Param(format!(
            "logs cover different traces: {} vs {} coflows",
            base_metas.len(),
            subject_ccts.len()
        )));
    }
    let mut coflows = Vec::with_capacity(base_metas.len());
    for m in &base_metas {
        let &subject_cct = subject_ccts
            .get(&m.id)
            .ok_or_else(|| Error::Param(format!("coflow {} missing from the '{}' log", m.id, subject.scheduler)))?;
        let base_cct = m.cct().unwrap_or_default();
        coflows.push(CoflowSpeedup {
            id: m.id,
            bin: bin_of(m.width, m.total_bytes),
            base_cct,
            subject_cct,
            speedup: base_cct / subject_cct,
        });
    }
    let mut ratios: Vec<f64> = coflows.iter().map(|c| c.speedup).collect();
    ratios.sort_by(f64::total_cmp);
    let base_sum: f64 = coflows.iter().map(|c| c.base_cct).sum();
    let subject_sum: f64 = coflows.iter().map(|c| c.subject_cct).sum();
    let pct = |p| percentile(&ratios, p).unwrap_or(f64::NAN);
    Ok(ComparisonReport {
        baseline: base.scheduler.clone(),
        subject: subject.scheduler.clone(),
        avg_ratio: base_sum / subject_sum,
        p10: pct(10.0),
        p50: pct(50.0),
        p90: pct(90.0),
        coflows,
    })
}

/// Size estimates of piloted coflows against their true sizes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimationReport {
    /// (coflow, true bytes, estimated bytes).
    pub pairs: Vec<(CoflowId, u64, f64)>,
    pub mean_error: f64,
    /// Population standard deviation of the relative error.
    pub std_error: f64,
}

impl EstimationReport {
    pub fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|&(_, t, s)| (s - t as f64).abs() / t as f64)
    }
}

pub fn estimation_report(log: &EventLog) -> EstimationReport {
    let pairs: Vec<(CoflowId, u64, f64)> = log
        .coflows()
        .iter()
        .filter(|m| !m.bypassed)
        .filter_map(|m| m.pilot_done.map(|(_, s)| (m.id, m.total_bytes, s)))
        .collect();
    let mut report = EstimationReport { pairs, ..Default::default() };
    let n = report.pairs.len() as f64;
    if n > 0.0 {
        let mean = report.errors().sum::<f64>() / n;
        let var = report.errors().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        report.mean_error = mean;
        report.std_error = var.sqrt();
    }
    report
}

/// One row of the per-coflow metrics file.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CoflowMetrics {
    pub coflow_id: CoflowId,
    pub arrival_ms: f64,
    pub width: usize,
    pub total_bytes: u64,
    pub bin: u8,
    pub cct_ms: f64,
    pub learn_latency_ms: Option<f64>,
    pub learn_bytes: Option<f64>,
    pub est_bytes: Option<f64>,
    pub est_error: Option<f64>,
    pub excluded_from_learning: bool,
}

/// Per-coflow metrics; learning columns are empty for schedulers without a
/// learning phase.
pub fn coflow_metrics(log: &EventLog, kind: SchedulerKind) -> Result<Vec<CoflowMetrics>> {
    let metas = finished(log)?;
    let overhead = learning_overhead(log, kind).ok();
    Ok(metas
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let learn = overhead.as_ref().map(|o| o[i]).filter(|o| !o.excluded);
            let est = m.pilot_done.filter(|_| !m.bypassed).map(|(_, s)| s);
            CoflowMetrics {
                coflow_id: m.id,
                arrival_ms: m.arrival_ms,
                width: m.width,
                total_bytes: m.total_bytes,
                bin: bin_of(m.width, m.total_bytes),
                cct_ms: m.cct().unwrap_or_default(),
                learn_latency_ms: learn.map(|o| o.latency_ms),
                learn_bytes: learn.map(|o| o.bytes),
                est_bytes: est,
                est_error: est.map(|s| (s - m.total_bytes as f64).abs() / m.total_bytes as f64),
                excluded_from_learning: overhead.as_ref().is_none_or(|o| o[i].excluded),
            }
        })
        .collect())
}
