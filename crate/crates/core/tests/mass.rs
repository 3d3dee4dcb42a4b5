mod common;

use common::*;
use graphalign::embedding::TrainingPair;
use graphalign::eval::{run_oracle_check, OracleCheckConfig};
use graphalign::graph::SalientObjectGraph;
use graphalign::mass::{mass, oracle_max_common_subgraph, MassConfig, MassOutcome};
use graphalign::sim::DetectionFrame;
use rand::Rng;

fn search(fa: &DetectionFrame, fb: &DetectionFrame, cfg: &MassConfig) -> (MassOutcome, Vec<(usize, usize)>) {
    let ga = SalientObjectGraph::build(fa).unwrap();
    let gb = SalientObjectGraph::build(fb).unwrap();
    let truth = TrainingPair::node_correspondence(&ga, fa, &gb, fb);
    (mass(&ga, ga.features(), &gb, gb.features(), cfg).unwrap(), truth)
}

#[test]
fn four_shared_objects_are_found_exactly() {
    let cfg = MassConfig {
        min_subgraph_size: 4,
        ..Default::default()
    };
    let mut r = rng(100);
    let mut hits = 0;
    for _ in 0..200 {
        let (fa, fb, _) = paired_views(&mut r, 4, 3, 3, 0.05);
        let (out, mut truth) = search(&fa, &fb, &cfg);
        truth.sort_unstable();
        if out.matched().is_some_and(|s| s.sorted_pairs() == truth) {
            hits += 1;
        }
    }
    assert!(hits >= 190, "{hits}/200");
}

#[test]
fn disjoint_scenes_do_not_match() {
    let cfg = MassConfig::default();
    let mut r = rng(200);
    let mut rejected = 0;
    for _ in 0..200 {
        let (na, nb) = (r.random_range(8..=16), r.random_range(8..=16));
        let (fa, fb, _) = paired_views(&mut r, 0, na, nb, 0.1);
        if search(&fa, &fb, &cfg).0.matched().is_none() {
            rejected += 1;
        }
    }
    assert!(rejected >= 198, "{rejected}/200");
}

#[test]
fn rich_overlap_gives_truth_correct_pairs() {
    let cfg = MassConfig::default();
    let mut r = rng(300);
    let mut correct = 0;
    for _ in 0..200 {
        let shared = r.random_range(8..=12);
        let (ea, eb) = (r.random_range(3..=6), r.random_range(3..=6));
        let (fa, fb, _) = paired_views(&mut r, shared, ea, eb, 0.1);
        let (out, truth) = search(&fa, &fb, &cfg);
        if out
            .matched()
            .is_some_and(|s| s.correspondences.iter().all(|c| truth.contains(c)))
        {
            correct += 1;
        }
    }
    assert!(correct >= 190, "{correct}/200");
}

#[test]
fn oracle_agrees_with_bron_kerbosch() {
    let cfg = MassConfig {
        min_subgraph_size: 1,
        ..Default::default()
    };
    let mut r = rng(400);
    for i in 0..50 {
        let shared = r.random_range(2..=7);
        let (fa, fb, _) = paired_views(&mut r, shared, 7 - shared, 7 - shared, 0.2);
        let ga = SalientObjectGraph::build(&fa).unwrap();
        let gb = SalientObjectGraph::build(&fb).unwrap();
        let oracle = oracle_max_common_subgraph(ga.features(), gb.features(), &cfg).unwrap();
        let (size, min_sum, tops) = bron_kerbosch_mcs(ga.features(), gb.features(), cfg.edge_threshold);
        assert_eq!(oracle.size(), size, "instance {i}");
        let sum: f64 = oracle.edge_discrepancies.iter().sum();
        assert!((sum - min_sum).abs() < 1e-9, "instance {i}: {sum} vs {min_sum}");
        assert!(tops.contains(&oracle.sorted_pairs()), "instance {i}");
    }
}

#[test]
fn search_matches_oracle_score_on_small_instances() {
    let report = run_oracle_check(&OracleCheckConfig::default(), &MassConfig::default()).unwrap();
    let agree = report
        .records
        .iter()
        .filter(|r| {
            r.mass_size == r.oracle_size && r.mass_epsilon.is_some_and(|e| (e - r.oracle_epsilon).abs() <= 1e-9)
        })
        .count();
    assert!(
        agree as f64 >= 0.9 * report.instances as f64,
        "{agree}/{}",
        report.instances
    );
}

#[test]
fn search_is_symmetric() {
    let cfg = MassConfig::default();
    let mut r = rng(500);
    let mut same = 0;
    for _ in 0..100 {
        let shared = r.random_range(6..=10);
        let (fa, fb, _) = paired_views(&mut r, shared, 3, 3, 0.1);
        let ga = SalientObjectGraph::build(&fa).unwrap();
        let gb = SalientObjectGraph::build(&fb).unwrap();
        let ab = mass(&ga, ga.features(), &gb, gb.features(), &cfg).unwrap();
        let ba = mass(&gb, gb.features(), &ga, ga.features(), &cfg).unwrap();
        if let (Some(x), Some(y)) = (ab.matched(), ba.matched()) {
            if x.swapped().sorted_pairs() == y.sorted_pairs() && (x.epsilon - y.epsilon).abs() < 1e-12 {
                same += 1;
            }
        }
    }
    assert!(same >= 95, "{same}/100");
}
