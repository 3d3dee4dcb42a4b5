//! Common-subgraph search between two views that share five objects, each
//! with its own clutter.

use graphalign::geometry::{Point2, RigidTransform2D};
use graphalign::graph::SalientObjectGraph;
use graphalign::mass::{mass, MassConfig, MassOutcome};

pub fn run_example() -> usize {
    let shared = [(0.0, 0.0), (12.0, 3.0), (5.0, 14.0), (-9.0, 6.0), (3.0, -11.0)];
    let t = RigidTransform2D::new(2.1, -40.0, 8.0);
    let mut a: Vec<Point2> = shared.iter().map(|&(x, y)| Point2::new(x, y)).collect();
    let mut b: Vec<Point2> = a.iter().map(|p| t.apply(p)).collect();
    a.extend([Point2::new(20.0, 20.0), Point2::new(-15.0, -12.0)]);
    b.extend([
        Point2::new(-70.0, 0.0),
        Point2::new(-25.0, 30.0),
        Point2::new(-48.0, -9.0),
    ]);
    let ga = SalientObjectGraph::from_points_unsorted(&a);
    let gb = SalientObjectGraph::from_points_unsorted(&b);
    match mass(&ga, ga.features(), &gb, gb.features(), &MassConfig::default()).unwrap() {
        MassOutcome::Match(s) => {
            println!("matched {} pairs, epsilon {:.3e}", s.size(), s.epsilon);
            for (p, q) in s.sorted_pairs() {
                println!("  a{p} <-> b{q}");
            }
            s.size()
        }
        MassOutcome::NoMatch { largest } => {
            println!("no match (largest candidate size {})", largest.map_or(0, |s| s.size()));
            0
        }
    }
}

#[allow(dead_code)]
fn main() {
    run_example();
}
