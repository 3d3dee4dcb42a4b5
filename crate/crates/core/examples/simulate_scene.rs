//! Seeded multi-agent scene: detections, odometry and ground truth, written
//! to a temporary directory in the same formats the CLI uses.

use graphalign::sim::io::{export_frames, import_frames, write_json};
use graphalign::sim::{generate_scenario, shared_object_count, ScenarioConfig};

pub fn run_example() -> usize {
    let cfg = ScenarioConfig {
        seed: 7,
        num_agents: 3,
        num_objects: 100,
        ..Default::default()
    };
    let s = generate_scenario(&cfg).unwrap();
    let last = cfg.duration - 1;
    for j in 1..cfg.num_agents {
        let (e, c) = (&s.streams[0][last], &s.streams[j][last]);
        println!(
            "agent0 sees {} boxes, agent{j} sees {}, {} objects shared",
            e.boxes.len(),
            c.boxes.len(),
            shared_object_count(e, c)
        );
    }
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames.jsonl");
    export_frames(&s.all_frames(), &frames, true).unwrap();
    write_json(&s.truth, &dir.path().join("truth.json")).unwrap();
    let back = import_frames(&frames).unwrap();
    assert_eq!(back, s.all_frames());
    println!("wrote and re-read {} frames", back.len());
    back.len()
}

#[allow(dead_code)]
fn main() {
    run_example();
}
