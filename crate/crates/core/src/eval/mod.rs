//! Seeded benchmarks over simulated scenes, scored against ground truth.

mod metrics;
mod oracle_check;

pub use metrics::{read_records_csv, write_records_csv, MetricsReport, TrialRecord, TrialStatus};
pub use oracle_check::{oracle_instance, run_oracle_check, OracleCheckConfig, OracleCheckReport, OracleRecord};

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{calibrate_threshold, edge_separation, generate_corpus, EmbeddingError, EmbeddingParams};
use crate::geometry::{normalize_angle, relative_pose, Pose2D, RigidTransform2D};
use crate::pipeline::{free_align, AlignmentResult, EdgeModel, GraphBuffer, PipelineConfig, PipelineError};
use crate::sim::{
    generate_scenario, inject_pose_attack, shared_object_count, MessageTruth, Scenario, ScenarioConfig, SimError,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid benchmark config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("trial {trial}: no scene satisfied the trial filter in {attempts} attempts")]
    FilterUnsatisfiable { trial: usize, attempts: usize },
}

impl EvalError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        EvalError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub trials: usize,
    /// Drives every scene seed and latency draw of the run.
    pub seed: u64,
    /// Inclusive range of message latency, in frames.
    pub latency_steps: (usize, usize),
    /// Scenes are redrawn until every message shares at least this many objects...
    pub min_shared: usize,
    /// ...at most this many...
    pub max_shared: Option<usize>,
    /// ...and each side sees at least this many unshared boxes.
    pub min_distractors: usize,
    pub max_attempts: usize,
    pub error_threshold_m: f64,
    pub rejected_as_errors: bool,
    /// Agents whose advertised poses are falsified when the scene enables the attack.
    pub attacked_agents: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 0,
            latency_steps: (0, 5),
            min_shared: 0,
            max_shared: None,
            min_distractors: 0,
            max_attempts: 500,
            error_threshold_m: 3.0,
            rejected_as_errors: false,
            attacked_agents: vec![1],
        }
    }
}

/// The ego is agent 0; every other agent sends one message per scene.
#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub report: MetricsReport,
    /// Raw pipeline output, in record order.
    pub results: Vec<AlignmentResult>,
    /// The same messages aligned by trusting advertised poses.
    pub baseline: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedReport {
    pub trusted_pose: MetricsReport,
    pub free_align: MetricsReport,
}

fn check_configs(scn: &ScenarioConfig, pipe: &PipelineConfig, bench: &BenchConfig) -> Result<(), EvalError> {
    scn.validate()?;
    pipe.validate()?;
    let bad = |m: String| Err(EvalError::Config(m));
    if scn.num_agents < 2 {
        return bad("benchmarks need at least two agents".into());
    }
    if scn.sample_interval_tau != pipe.tau_ms {
        return bad(format!(
            "scene sample interval {} ms differs from pipeline tau {} ms",
            scn.sample_interval_tau, pipe.tau_ms
        ));
    }
    let (lo, hi) = bench.latency_steps;
    if lo > hi || hi >= scn.duration {
        return bad(format!(
            "latency_steps ({lo}, {hi}) must fit inside {} frames",
            scn.duration
        ));
    }
    if bench.max_shared.is_some_and(|m| m < bench.min_shared) {
        return bad("max_shared is below min_shared".into());
    }
    if bench.max_attempts == 0 {
        return bad("max_attempts must be positive".into());
    }
    if let Some(a) = bench.attacked_agents.iter().find(|&&a| a >= scn.num_agents) {
        return bad(format!("attacked agent {a} does not exist"));
    }
    Ok(())
}

struct TrialOutput {
    records: Vec<TrialRecord>,
    results: Vec<AlignmentResult>,
    baseline: Vec<TrialRecord>,
}

struct MessageContext {
    shared: usize,
    ego_boxes: usize,
    collab_boxes: usize,
    truth: MessageTruth,
    true_index: Option<usize>,
}

fn message_context(s: &Scenario, collaborator: usize, capture: usize, buffer_len: usize) -> MessageContext {
    let last = s.config.duration - 1;
    let (ego_f, col_f) = (&s.streams[0][capture], &s.streams[collaborator][capture]);
    let d = last - capture;
    MessageContext {
        shared: shared_object_count(ego_f, col_f),
        ego_boxes: ego_f.boxes.len(),
        collab_boxes: col_f.boxes.len(),
        truth: s.truth.message_between(0, last, collaborator, capture),
        true_index: (d <= buffer_len).then_some(d),
    }
}

fn passes_filter(m: &MessageContext, bench: &BenchConfig) -> bool {
    m.shared >= bench.min_shared
        && bench.max_shared.is_none_or(|x| m.shared <= x)
        && m.ego_boxes - m.shared >= bench.min_distractors
        && m.collab_boxes - m.shared >= bench.min_distractors
}

fn base_record(trial: usize, seed: u64, m: &MessageContext) -> TrialRecord {
    let t = &m.truth;
    TrialRecord {
        scenario: trial,
        scenario_seed: seed,
        ego: t.ego,
        collaborator: t.collaborator,
        shared_objects: m.shared,
        ego_boxes: m.ego_boxes,
        collab_boxes: m.collab_boxes,
        true_latency_ms: t.true_latency_ms,
        advertised_latency_ms: t.advertised_latency_ms,
        true_clock_deviation_ms: t.clock_deviation_ms,
        true_dx: t.relative_pose.tx,
        true_dy: t.relative_pose.ty,
        true_dtheta_deg: t.relative_pose.rotation.to_degrees(),
        true_index: m.true_index,
        status: TrialStatus::Rejected,
        reject_reason: None,
        est_dx: None,
        est_dy: None,
        est_dtheta_deg: None,
        est_latency_ms: None,
        est_clock_deviation_ms: None,
        matched_index: None,
        subgraph_size: None,
        epsilon: None,
        ambiguous_time: false,
        planar_error_m: None,
        rotation_error_deg: None,
    }
}

fn fill_pose(rec: &mut TrialRecord, est: &RigidTransform2D, truth: &RigidTransform2D) {
    rec.status = TrialStatus::Aligned;
    rec.est_dx = Some(est.tx);
    rec.est_dy = Some(est.ty);
    rec.est_dtheta_deg = Some(est.rotation.to_degrees());
    rec.planar_error_m = Some(est.translation().distance(&truth.translation()));
    rec.rotation_error_deg = Some(normalize_angle(est.rotation - truth.rotation).abs().to_degrees());
}

fn free_align_record(mut rec: TrialRecord, result: &AlignmentResult, truth: &MessageTruth) -> TrialRecord {
    match result {
        AlignmentResult::Aligned(a) => {
            fill_pose(&mut rec, &a.relative_pose, &truth.relative_pose);
            rec.est_latency_ms = Some(a.latency_estimate_ms);
            rec.est_clock_deviation_ms = a.clock_deviation_estimate_ms;
            rec.matched_index = Some(a.matched_index);
            rec.subgraph_size = Some(a.subgraph.size());
            rec.epsilon = Some(a.subgraph.epsilon);
            rec.ambiguous_time = a.ambiguous_time;
        }
        AlignmentResult::Rejected { reason } => {
            rec.reject_reason = Some(
                serde_json::to_value(reason)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default(),
            );
        }
    }
    rec
}

fn run_trial(
    scn: &ScenarioConfig,
    pipe: &PipelineConfig,
    bench: &BenchConfig,
    model: &EdgeModel,
    trial: usize,
) -> Result<TrialOutput, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(bench.seed);
    rng.set_stream(trial as u64);
    let last = scn.duration - 1;
    for _ in 0..bench.max_attempts {
        let seed: u64 = rng.random();
        let d = rng.random_range(bench.latency_steps.0..=bench.latency_steps.1);
        let s = generate_scenario(&ScenarioConfig { seed, ..scn.clone() })?;
        let capture = last - d;
        let msgs: Vec<MessageContext> = (1..scn.num_agents)
            .map(|j| message_context(&s, j, capture, pipe.buffer_len))
            .collect();
        if !msgs.iter().all(|m| passes_filter(m, bench)) {
            continue;
        }

        let mut buffer = GraphBuffer::new(pipe.buffer_len, pipe.tau_ms, model.clone());
        for k in last.saturating_sub(pipe.buffer_len)..=last {
            buffer.push_frame(&s.streams[0][k].without_truth(), &s.odometry[0].increments[k])?;
        }
        let advertised: Vec<Vec<Pose2D>> = if scn.pose_attack {
            inject_pose_attack(&s.truth, scn.pose_attack_magnitude, &bench.attacked_agents, seed)?.poses
        } else {
            s.truth.agents.iter().map(|a| a.poses.clone()).collect()
        };

        let mut out = TrialOutput {
            records: Vec::new(),
            results: Vec::new(),
            baseline: Vec::new(),
        };
        for m in &msgs {
            let j = m.truth.collaborator;
            let collab = s.streams[j][capture].without_truth();
            let result = free_align(&buffer, &collab, Some(m.truth.advertised_latency_ms), pipe);
            out.records
                .push(free_align_record(base_record(trial, seed, m), &result, &m.truth));
            out.results.push(result);

            let trusted = relative_pose(&advertised[0][last], &advertised[j][capture]);
            let mut b = base_record(trial, seed, m);
            fill_pose(&mut b, &trusted, &m.truth.relative_pose);
            b.est_latency_ms = Some(m.truth.advertised_latency_ms);
            b.est_clock_deviation_ms = Some(0);
            b.matched_index = m.true_index;
            out.baseline.push(b);
        }
        return Ok(out);
    }
    Err(EvalError::FilterUnsatisfiable {
        trial,
        attempts: bench.max_attempts,
    })
}

/// Runs `bench.trials` seeded scenes through the pipeline. Trials run in
/// parallel and are gathered in trial order, so output is seed-determined.
pub fn run_benchmark(
    scn: &ScenarioConfig,
    pipe: &PipelineConfig,
    bench: &BenchConfig,
    model: &EdgeModel,
) -> Result<BenchOutcome, EvalError> {
    check_configs(scn, pipe, bench)?;
    let trials = (0..bench.trials)
        .into_par_iter()
        .map(|t| run_trial(scn, pipe, bench, model, t))
        .collect::<Result<Vec<_>, _>>()?;
    let mut records = Vec::new();
    let mut results = Vec::new();
    let mut baseline = Vec::new();
    for t in trials {
        records.extend(t.records);
        results.extend(t.results);
        baseline.extend(t.baseline);
    }
    Ok(BenchOutcome {
        report: MetricsReport::from_records(records, bench.error_threshold_m, bench.rejected_as_errors),
        results,
        baseline: MetricsReport::from_records(baseline, bench.error_threshold_m, bench.rejected_as_errors),
    })
}

/// Scores the trusted-pose baseline and the pipeline on the same seeds with
/// advertised poses displaced by `magnitude` meters (no attack when 0).
pub fn compare_baseline_trusted_pose(
    scn: &ScenarioConfig,
    pipe: &PipelineConfig,
    bench: &BenchConfig,
    model: &EdgeModel,
    magnitude: f64,
) -> Result<PairedReport, EvalError> {
    let attacked = ScenarioConfig {
        pose_attack: magnitude > 0.0,
        pose_attack_magnitude: if magnitude > 0.0 {
            magnitude
        } else {
            scn.pose_attack_magnitude
        },
        ..scn.clone()
    };
    let out = run_benchmark(&attacked, pipe, bench, model)?;
    Ok(PairedReport {
        trusted_pose: out.baseline,
        free_align: out.report,
    })
}

/// Wraps trained parameters with a match threshold calibrated on a freshly
/// generated held-out corpus.
pub fn calibrate_learned_model(
    params: EmbeddingParams,
    scene: &ScenarioConfig,
    holdout_pairs: usize,
    seed: u64,
) -> Result<EdgeModel, EvalError> {
    let holdout = generate_corpus(scene, holdout_pairs, seed)?;
    let sep = edge_separation(Some(&params), &holdout)?;
    let threshold =
        calibrate_threshold(&sep).ok_or_else(|| EvalError::Config("held-out corpus has no matched edges".into()))?;
    Ok(EdgeModel::Learned { params, threshold })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean_scene() -> ScenarioConfig {
        ScenarioConfig {
            detection_jitter_sigma: 0.0,
            miss_rate: 0.0,
            false_positive_rate: 0.0,
            num_objects: 80,
            ..Default::default()
        }
    }

    #[test]
    fn perfect_conditions_are_exact() {
        let bench = BenchConfig {
            trials: 10,
            latency_steps: (0, 0),
            min_shared: 6,
            ..Default::default()
        };
        let out = run_benchmark(
            &clean_scene(),
            &PipelineConfig::default(),
            &bench,
            &EdgeModel::Handcrafted,
        )
        .unwrap();
        let r = &out.report;
        assert_eq!(r.trials, 10);
        assert_eq!(r.error_rate, Some(0.0));
        assert!(r.mean_planar_error_m.unwrap() < 1e-6, "{}", r.summary_line());
        assert_eq!(out.baseline.error_rate, Some(0.0));
    }

    #[test]
    fn rejects_mismatched_tau() {
        let scn = ScenarioConfig {
            sample_interval_tau: 50,
            ..Default::default()
        };
        assert!(matches!(
            run_benchmark(
                &scn,
                &PipelineConfig::default(),
                &BenchConfig::default(),
                &EdgeModel::Handcrafted
            ),
            Err(EvalError::Config(_))
        ));
    }

    #[test]
    fn impossible_filter_is_reported() {
        let bench = BenchConfig {
            trials: 1,
            min_shared: 1000,
            max_attempts: 3,
            ..Default::default()
        };
        assert!(matches!(
            run_benchmark(
                &clean_scene(),
                &PipelineConfig::default(),
                &bench,
                &EdgeModel::Handcrafted
            ),
            Err(EvalError::FilterUnsatisfiable { trial: 0, attempts: 3 })
        ));
    }
}
