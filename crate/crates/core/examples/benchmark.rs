//! Seeded benchmark with the anchor ablation: multi-anchor against
//! single-anchor search on the same trials.

use graphalign::eval::{run_benchmark, BenchConfig};
use graphalign::mass::AnchorMode;
use graphalign::pipeline::{EdgeModel, PipelineConfig};
use graphalign::sim::ScenarioConfig;

pub fn run_example(trials: usize) -> (usize, usize) {
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
    let mut counts = Vec::new();
    for mode in [AnchorMode::Multi, AnchorMode::Single] {
        let mut pipe = PipelineConfig::default();
        pipe.mass.anchor_mode = mode;
        let out = run_benchmark(&scn, &pipe, &bench, &EdgeModel::Handcrafted).unwrap();
        println!("{mode:?}: {}", out.report.summary_line());
        counts.push(out.report.trials);
    }
    (counts[0], counts[1])
}

#[allow(dead_code)]
fn main() {
    run_example(100);
}
