//! Train the learned edge features on a small simulated corpus, then compare
//! matched and unmatched edge distances on held-out pairs.

use graphalign::embedding::{
    default_corpus_scene, edge_separation, generate_corpus, train, EmbeddingConfig, EmbeddingParams, TrainConfig,
};

pub fn run_example() -> (f64, f64) {
    let scene = default_corpus_scene();
    let corpus = generate_corpus(&scene, 40, 1).unwrap();
    let init = EmbeddingParams::init(EmbeddingConfig::default()).unwrap();
    let cfg = TrainConfig {
        epochs: 40,
        ..Default::default()
    };
    let (params, report) = train(&corpus, init, &cfg).unwrap();
    println!("loss {:.4} -> {:.4}", report.initial_loss, report.final_loss);
    let holdout = generate_corpus(&scene, 20, 2).unwrap();
    let sep = edge_separation(Some(&params), &holdout).unwrap();
    println!(
        "held-out distance: matched {:.3}, unmatched {:.3}",
        sep.mean_matched(),
        sep.mean_unmatched()
    );
    (report.initial_loss, report.final_loss)
}

#[allow(dead_code)]
fn main() {
    run_example();
}
