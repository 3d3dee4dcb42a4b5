//! Salient-object graphs: edge features are unchanged when the whole view is
//! rotated and translated.

use graphalign::geometry::{Point2, RigidTransform2D};
use graphalign::graph::SalientObjectGraph;

pub fn run_example() -> f64 {
    let pts = [
        Point2::new(0.0, 0.0),
        Point2::new(10.0, 2.0),
        Point2::new(4.0, 9.0),
        Point2::new(-6.0, 3.0),
    ];
    let t = RigidTransform2D::new(-1.2, 30.0, 5.0);
    let moved: Vec<Point2> = pts.iter().map(|p| t.apply(p)).collect();
    let a = SalientObjectGraph::from_points_unsorted(&pts);
    let b = SalientObjectGraph::from_points_unsorted(&moved);
    let mut worst = 0.0f64;
    for p in 0..a.len() {
        for q in 0..a.len() {
            for (x, y) in a.features().get(p, q).iter().zip(b.features().get(p, q)) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    println!("{} nodes, feature dim {}", a.len(), a.features().dim());
    println!("distance profile of node 0: {:?}", a.distance_profile(0));
    println!("largest feature change under a rigid motion: {worst:.2e}");
    worst
}

#[allow(dead_code)]
fn main() {
    run_example();
}
