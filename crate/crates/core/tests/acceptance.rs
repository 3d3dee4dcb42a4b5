//! Acceptance criteria. Runs every check, prints one line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use common::*;
use graphalign::embedding::{
    default_corpus_scene, generate_corpus, train, EmbeddingConfig, EmbeddingParams, TrainConfig,
};
use graphalign::eval::{
    calibrate_learned_model, run_benchmark, run_oracle_check, BenchConfig, BenchOutcome, OracleCheckConfig,
};
use graphalign::geometry::{apply_transform, normalize_angle, rigid_fit, PointSet2D};
use graphalign::mass::{AnchorMode, MassConfig};
use graphalign::pipeline::{EdgeModel, PipelineConfig};
use graphalign::sim::ScenarioConfig;

struct Line {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn line(id: &'static str, pass: bool, detail: String) -> Line {
    Line { id, pass, detail }
}

fn pct(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |v| format!("{:.2}%", 100.0 * v))
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn benchmark_scene() -> ScenarioConfig {
    ScenarioConfig {
        num_objects: 100,
        detection_jitter_sigma: 0.1,
        ..Default::default()
    }
}

fn benchmark_config(trials: usize) -> BenchConfig {
    BenchConfig {
        trials,
        min_shared: 8,
        min_distractors: 3,
        ..Default::default()
    }
}

fn bench_with(scn: &ScenarioConfig, pipe: &PipelineConfig, bench: &BenchConfig, model: &EdgeModel) -> BenchOutcome {
    run_benchmark(scn, pipe, bench, model).expect("benchmark runs")
}

fn rigid_fit_exactness() -> Line {
    let mut r = rng(1);
    let start = Instant::now();
    let (mut worst_t, mut worst_r): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let n = r.random_range(2..=50);
        let src = PointSet2D::new(spread_points(&mut r, n, 200.0, 0.5)).unwrap();
        let t = random_transform(&mut r);
        let fit = rigid_fit(&src, &apply_transform(&t, &src)).unwrap();
        worst_t = worst_t.max((fit.tx - t.tx).abs()).max((fit.ty - t.ty).abs());
        worst_r = worst_r.max(normalize_angle(fit.rotation - t.rotation).abs());
    }
    let took = start.elapsed();
    line(
        "1 rigid-fit exactness",
        worst_t <= 1e-9 && worst_r <= 1e-9 && took < Duration::from_secs(1),
        format!(
            "max translation error {worst_t:.2e} m, rotation {worst_r:.2e} rad, {}",
            secs(took)
        ),
    )
}

fn oracle_equivalence() -> Line {
    let start = Instant::now();
    let r = run_oracle_check(&OracleCheckConfig::default(), &MassConfig::default()).unwrap();
    let took = start.elapsed();
    line(
        "2 oracle equivalence",
        r.instances == 200 && r.within_one_rate >= 0.95 && r.exact_rate >= 0.90 && took < Duration::from_secs(30),
        format!(
            "{} instances: size >= oracle-1 in {}, exact in {}, {}",
            r.instances,
            pct(Some(r.within_one_rate)),
            pct(Some(r.exact_rate)),
            secs(took)
        ),
    )
}

fn matching_quality(out: &BenchOutcome, took: Duration) -> Line {
    let r = &out.report;
    let pass = r.trials == 500
        && r.error_rate.is_some_and(|e| e < 0.02)
        && r.mean_planar_error_m.is_some_and(|e| e < 0.5)
        && r.mean_rotation_error_deg.is_some_and(|e| e < 1.0)
        && took < Duration::from_secs(120);
    line(
        "3 matching quality",
        pass,
        format!(
            "{} trials: error rate {}, planar {:.3} m, rotation {:.3} deg, rejected {}, {}",
            r.trials,
            pct(r.error_rate),
            r.mean_planar_error_m.unwrap_or(f64::NAN),
            r.mean_rotation_error_deg.unwrap_or(f64::NAN),
            pct(Some(r.rejection_rate)),
            secs(took)
        ),
    )
}

fn temporal_alignment() -> Line {
    let pipe = PipelineConfig::default();
    let scn = benchmark_scene();
    let bench = benchmark_config(200);
    let out = bench_with(&scn, &pipe, &bench, &EdgeModel::Handcrafted);
    let r = &out.report;
    let ok = pipe.buffer_len == 10
        && pipe.tau_ms == 100
        && scn.object_speed_range.0 >= 2.0
        && bench.latency_steps == (0, 5)
        && r.sync_accuracy_all.is_some_and(|a| a >= 0.9)
        && r.mean_abs_latency_error_ms
            .is_some_and(|e| e <= pipe.tau_ms as f64 / 2.0);
    line(
        "4 temporal alignment",
        ok,
        format!(
            "{} trials: correct slot {} of all ({} of aligned), mean |dt| error {:.1} ms",
            r.trials,
            pct(r.sync_accuracy_all),
            pct(r.sync_accuracy_aligned),
            r.mean_abs_latency_error_ms.unwrap_or(f64::NAN)
        ),
    )
}

fn safety_rejection() -> Line {
    let pipe = PipelineConfig::default();
    let scn = ScenarioConfig {
        num_objects: 60,
        max_agent_separation: Some(70.0),
        ..Default::default()
    };
    let bench = BenchConfig {
        trials: 200,
        max_shared: Some(pipe.mass.min_subgraph_size - 1),
        min_distractors: 3,
        max_attempts: 5000,
        ..Default::default()
    };
    let r = bench_with(&scn, &pipe, &bench, &EdgeModel::Handcrafted).report;
    let bad = r
        .records
        .iter()
        .filter(|x| x.planar_error_m.is_some_and(|e| e > 3.0))
        .count();
    let below = r.records.iter().all(|x| x.shared_objects < pipe.mass.min_subgraph_size);
    line(
        "5 safety rejection",
        r.trials == 200 && below && r.rejection_rate >= 0.99 && bad == 0,
        format!(
            "{} trials with < {} shared objects: rejected {}, aligned with error > 3 m: {bad}",
            r.trials,
            pipe.mass.min_subgraph_size,
            pct(Some(r.rejection_rate))
        ),
    )
}

fn attack_immunity(clean: &BenchOutcome) -> Line {
    let attacked_scene = ScenarioConfig {
        pose_attack: true,
        pose_attack_magnitude: 10.0,
        ..benchmark_scene()
    };
    let attacked = bench_with(
        &attacked_scene,
        &PipelineConfig::default(),
        &benchmark_config(500),
        &EdgeModel::Handcrafted,
    );
    let identical = clean.results.len() == attacked.results.len()
        && serde_json::to_string(&clean.results).unwrap() == serde_json::to_string(&attacked.results).unwrap();
    let base = attacked.baseline.error_rate;
    line(
        "6 attack immunity",
        identical && base.is_some_and(|e| e > 0.9),
        format!(
            "results bit-identical: {identical}; trusted-pose baseline error rate {} (unattacked {})",
            pct(base),
            pct(clean.baseline.error_rate)
        ),
    )
}

fn ablation_anchors(multi: &BenchOutcome) -> Line {
    let mut pipe = PipelineConfig::default();
    pipe.mass.anchor_mode = AnchorMode::Single;
    let single = bench_with(
        &benchmark_scene(),
        &pipe,
        &benchmark_config(500),
        &EdgeModel::Handcrafted,
    );
    let (s, m) = (&single.report, &multi.report);
    let strict = |x: &graphalign::eval::MetricsReport| {
        graphalign::eval::MetricsReport::from_records(x.records.clone(), x.error_threshold_m, true).error_rate
    };
    line(
        "7a anchor ablation",
        matches!((s.error_rate, m.error_rate), (Some(a), Some(b)) if a > b),
        format!(
            "error rate single {} vs multi {} (rejected {} vs {}; counting rejections as errors {} vs {}; sync {} vs {})",
            pct(s.error_rate),
            pct(m.error_rate),
            s.rejected,
            m.rejected,
            pct(strict(s)),
            pct(strict(m)),
            pct(s.sync_accuracy_all),
            pct(m.sync_accuracy_all)
        ),
    )
}

fn ablation_features(handcrafted: &BenchOutcome, params: EmbeddingParams) -> Line {
    let model = calibrate_learned_model(params, &default_corpus_scene(), 100, 7).unwrap();
    let learned = bench_with(
        &benchmark_scene(),
        &PipelineConfig::default(),
        &benchmark_config(500),
        &model,
    );
    let (h, l) = (&handcrafted.report, &learned.report);
    let threshold = match &model {
        EdgeModel::Learned { threshold, .. } => *threshold,
        EdgeModel::Handcrafted => f64::NAN,
    };
    line(
        "7b edge-feature ablation",
        matches!((h.error_rate, l.error_rate), (Some(a), Some(b)) if a >= b),
        format!(
            "error rate handcrafted {} vs learned {} (rejected {} vs {}, learned threshold {threshold:.3})",
            pct(h.error_rate),
            pct(l.error_rate),
            h.rejected,
            l.rejected
        ),
    )
}

fn embedding_correctness() -> (Line, EmbeddingParams) {
    let grad = (0..20).map(|s| gradient_check(s, 1e-6)).fold(0.0, f64::max);

    let corpus = generate_corpus(&default_corpus_scene(), 200, 1).unwrap();
    let init = EmbeddingParams::init(EmbeddingConfig::default()).unwrap();
    let (params, report) = train(
        &corpus,
        init,
        &TrainConfig {
            epochs: 200,
            ..Default::default()
        },
    )
    .unwrap();
    let ratio = report.final_loss / report.initial_loss;

    let rigid = (0..50).map(rigid_invariance_error).fold(0.0, f64::max);
    let p = EmbeddingParams::init(EmbeddingConfig::default()).unwrap();
    let mut perm = 0.0f64;
    let mut r = rng(2);
    for n in 2..=6 {
        let pts = spread_points(&mut r, n, 40.0, 1.0);
        perm = perm.max(permutation_error(&pts, &permutations(n), &p));
    }
    for n in [8, 12, 16] {
        let pts = spread_points(&mut r, n, 60.0, 1.0);
        let perms: Vec<Vec<usize>> = (0..10)
            .map(|_| {
                let mut v: Vec<usize> = (0..n).collect();
                v.shuffle(&mut r);
                v
            })
            .collect();
        perm = perm.max(permutation_error(&pts, &perms, &p));
    }
    (
        line(
            "8 embedding correctness",
            grad < 1e-4 && ratio <= 0.5 && rigid <= 1e-9 && perm <= 1e-9,
            format!(
                "gradient rel. error {grad:.2e} over 20 configs; loss {:.4} -> {:.4} (x{ratio:.3}) on {} pairs; rigid {rigid:.1e}; permutation {perm:.1e}",
                report.initial_loss,
                report.final_loss,
                corpus.len()
            ),
        ),
        params,
    )
}

fn cli_determinism_check() -> Line {
    let dir = tempfile::tempdir().unwrap();
    let results = cli_determinism(dir.path());
    let failed: Vec<&str> = results.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    line(
        "9 determinism",
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} command runs byte-identical on rerun", results.len())
        } else {
            format!("differing outputs: {}", failed.join(", "))
        },
    )
}

fn main() {
    let mut lines = vec![rigid_fit_exactness(), oracle_equivalence()];

    let start = Instant::now();
    let multi = bench_with(
        &benchmark_scene(),
        &PipelineConfig::default(),
        &benchmark_config(500),
        &EdgeModel::Handcrafted,
    );
    lines.push(matching_quality(&multi, start.elapsed()));
    lines.push(temporal_alignment());
    lines.push(safety_rejection());
    lines.push(attack_immunity(&multi));
    lines.push(ablation_anchors(&multi));
    let (embedding, params) = embedding_correctness();
    lines.push(ablation_features(&multi, params));
    lines.push(embedding);
    lines.push(cli_determinism_check());

    lines.sort_by_key(|l| l.id);
    for l in &lines {
        println!(
            "[{}] criterion {}: {}",
            if l.pass { "PASS" } else { "FAIL" },
            l.id,
            l.detail
        );
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("{} of {} criteria passed", lines.len() - failed, lines.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
