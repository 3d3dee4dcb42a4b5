use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// How an alignment attempt ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Aligned,
    Rejected,
}

/// One row per (scenario, message): truth, estimate and derived errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scenario: usize,
    pub scenario_seed: u64,
    pub ego: usize,
    pub collaborator: usize,
    pub shared_objects: usize,
    pub ego_boxes: usize,
    pub collab_boxes: usize,
    pub true_latency_ms: i64,
    pub advertised_latency_ms: i64,
    pub true_clock_deviation_ms: i64,
    pub true_dx: f64,
    pub true_dy: f64,
    pub true_dtheta_deg: f64,
    /// Buffer index of the true capture frame, if it is still buffered.
    pub true_index: Option<usize>,
    pub status: TrialStatus,
    pub reject_reason: Option<String>,
    pub est_dx: Option<f64>,
    pub est_dy: Option<f64>,
    pub est_dtheta_deg: Option<f64>,
    pub est_latency_ms: Option<i64>,
    pub est_clock_deviation_ms: Option<i64>,
    pub matched_index: Option<usize>,
    pub subgraph_size: Option<usize>,
    pub epsilon: Option<f64>,
    pub ambiguous_time: bool,
    pub planar_error_m: Option<f64>,
    pub rotation_error_deg: Option<f64>,
}

impl TrialRecord {
    pub fn is_aligned(&self) -> bool {
        self.status == TrialStatus::Aligned
    }

    /// Correct timestamp: the true buffer slot when one exists, otherwise a rejection.
    pub fn time_correct(&self) -> bool {
        match self.true_index {
            Some(i) => self.matched_index == Some(i),
            None => !self.is_aligned(),
        }
    }

    pub fn latency_error_ms(&self) -> Option<i64> {
        self.est_latency_ms.map(|e| (e - self.true_latency_ms).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub trials: usize,
    pub aligned: usize,
    pub rejected: usize,
    pub rejection_rate: f64,
    /// Planar error above which an aligned result counts as an error.
    pub error_threshold_m: f64,
    pub rejected_as_errors: bool,
    pub errors: usize,
    pub error_rate: Option<f64>,
    pub mean_planar_error_m: Option<f64>,
    pub mean_rotation_error_deg: Option<f64>,
    /// Correct timestamps over all messages.
    pub sync_accuracy_all: Option<f64>,
    /// Correct timestamps over aligned messages.
    pub sync_accuracy_aligned: Option<f64>,
    pub mean_abs_latency_error_ms: Option<f64>,
    pub records: Vec<TrialRecord>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl MetricsReport {
    /// Every aggregate is a function of `records` and the two policy fields.
    pub fn from_records(records: Vec<TrialRecord>, error_threshold_m: f64, rejected_as_errors: bool) -> Self {
        let trials = records.len();
        let aligned: Vec<&TrialRecord> = records.iter().filter(|r| r.is_aligned()).collect();
        let rejected = trials - aligned.len();
        let pose_errors = aligned
            .iter()
            .filter(|r| r.planar_error_m.is_some_and(|e| e > error_threshold_m))
            .count();
        let (errors, error_den) = if rejected_as_errors {
            (pose_errors + rejected, trials)
        } else {
            (pose_errors, aligned.len())
        };
        Self {
            trials,
            aligned: aligned.len(),
            rejected,
            rejection_rate: ratio(rejected, trials).unwrap_or(0.0),
            error_threshold_m,
            rejected_as_errors,
            errors,
            error_rate: ratio(errors, error_den),
            mean_planar_error_m: mean(aligned.iter().filter_map(|r| r.planar_error_m)),
            mean_rotation_error_deg: mean(aligned.iter().filter_map(|r| r.rotation_error_deg)),
            sync_accuracy_all: ratio(records.iter().filter(|r| r.time_correct()).count(), trials),
            sync_accuracy_aligned: ratio(aligned.iter().filter(|r| r.time_correct()).count(), aligned.len()),
            mean_abs_latency_error_ms: mean(aligned.iter().filter_map(|r| r.latency_error_ms().map(|e| e as f64))),
            records,
        }
    }

    pub fn summary_line(&self) -> String {
        let f = |v: Option<f64>| v.map_or("n/a".to_owned(), |v| format!("{v:.4}"));
        format!(
            "trials={} aligned={} rejected={} error_rate={} planar_m={} rot_deg={} sync={} latency_err_ms={}",
            self.trials,
            self.aligned,
            self.rejected,
            f(self.error_rate),
            f(self.mean_planar_error_m),
            f(self.mean_rotation_error_deg),
            f(self.sync_accuracy_all),
            f(self.mean_abs_latency_error_ms),
        )
    }

    pub fn write_json(&self, path: &Path) -> Result<(), EvalError> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(|e| EvalError::io(path, e))
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        let file = std::fs::File::create(path).map_err(|e| EvalError::io(path, e))?;
        write_records_csv(&self.records, file).map_err(|e| EvalError::io(path, e))
    }
}

pub fn write_records_csv<W: Write>(records: &[TrialRecord], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(std::io::Error::other)?;
    }
    w.flush()
}

pub fn read_records_csv(path: &Path) -> Result<Vec<TrialRecord>, EvalError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| EvalError::io(path, std::io::Error::other(e)))?;
    r.deserialize()
        .collect::<Result<Vec<TrialRecord>, _>>()
        .map_err(|e| EvalError::io(path, std::io::Error::other(e)))
}
