//! Full alignment of one delayed collaborator message: buffer the ego's
//! recent frames, then recover the relative pose and the message age.

use graphalign::pipeline::{free_align, EdgeModel, GraphBuffer, PipelineConfig};
use graphalign::sim::{generate_scenario, ScenarioConfig};

pub fn run_example() -> Option<i64> {
    let scn = ScenarioConfig {
        seed: 11,
        num_objects: 100,
        ..Default::default()
    };
    let s = generate_scenario(&scn).unwrap();
    let pipe = PipelineConfig::default();
    let last = scn.duration - 1;
    let capture = last - 3;
    let mut buffer = GraphBuffer::new(pipe.buffer_len, pipe.tau_ms, EdgeModel::Handcrafted);
    for k in last - pipe.buffer_len..=last {
        buffer
            .push_frame(&s.streams[0][k].without_truth(), &s.odometry[0].increments[k])
            .unwrap();
    }
    let truth = s.truth.message_between(0, last, 1, capture);
    let msg = s.streams[1][capture].without_truth();
    let result = free_align(&buffer, &msg, Some(truth.advertised_latency_ms), &pipe);
    println!(
        "truth: dx={:.2} dy={:.2} dtheta_deg={:.2} latency_ms={} clock_dev_ms={}",
        truth.relative_pose.tx,
        truth.relative_pose.ty,
        truth.relative_pose.rotation.to_degrees(),
        truth.true_latency_ms,
        truth.clock_deviation_ms
    );
    match result.aligned() {
        Some(a) => {
            println!(
                "est:   dx={:.2} dy={:.2} dtheta_deg={:.2} latency_ms={} clock_dev_ms={:?} (psi={})",
                a.relative_pose.tx,
                a.relative_pose.ty,
                a.relative_pose.rotation.to_degrees(),
                a.latency_estimate_ms,
                a.clock_deviation_estimate_ms,
                a.subgraph.size()
            );
            Some(a.latency_estimate_ms)
        }
        None => {
            println!("rejected: {result:?}");
            None
        }
    }
}

#[allow(dead_code)]
fn main() {
    run_example();
}
