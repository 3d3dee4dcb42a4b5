//! Falsified advertised poses: a receiver that trusts them is misled, while
//! detection-only alignment gives the same answer as without the attack.

use graphalign::eval::{compare_baseline_trusted_pose, BenchConfig};
use graphalign::pipeline::{EdgeModel, PipelineConfig};
use graphalign::sim::ScenarioConfig;

pub fn run_example(trials: usize) -> (f64, f64) {
    let scn = ScenarioConfig {
        num_objects: 100,
        ..Default::default()
    };
    let bench = BenchConfig {
        trials,
        min_shared: 8,
        min_distractors: 3,
        ..Default::default()
    };
    let pipe = PipelineConfig::default();
    let clean = compare_baseline_trusted_pose(&scn, &pipe, &bench, &EdgeModel::Handcrafted, 0.0).unwrap();
    let attacked = compare_baseline_trusted_pose(&scn, &pipe, &bench, &EdgeModel::Handcrafted, 10.0).unwrap();
    println!("no attack, trusted poses: {}", clean.trusted_pose.summary_line());
    println!("no attack, detections:    {}", clean.free_align.summary_line());
    println!("10 m attack, trusted:     {}", attacked.trusted_pose.summary_line());
    println!("10 m attack, detections:  {}", attacked.free_align.summary_line());
    (
        attacked.trusted_pose.error_rate.unwrap_or(0.0),
        attacked.free_align.error_rate.unwrap_or(0.0),
    )
}

#[allow(dead_code)]
fn main() {
    run_example(50);
}
