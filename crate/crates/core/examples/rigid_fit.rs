//! Least-squares rigid fit: recover a planar rotation and translation from
//! corresponding points, with and without noise.

use graphalign::geometry::{apply_transform, rigid_fit, PointSet2D, RigidTransform2D};

pub fn run_example() -> f64 {
    let src = PointSet2D::from_xy(&[(0.0, 0.0), (4.0, 1.0), (-2.0, 5.0), (7.0, -3.0), (1.5, 2.5)]).unwrap();
    let truth = RigidTransform2D::new(0.7, 12.0, -4.0);
    let dst = apply_transform(&truth, &src);
    let fit = rigid_fit(&src, &dst).unwrap();
    println!(
        "true   rot={:.6} t=({:.6}, {:.6})\nfitted rot={:.6} t=({:.6}, {:.6})",
        truth.rotation, truth.tx, truth.ty, fit.rotation, fit.tx, fit.ty
    );
    fit.max_abs_diff(&truth)
}

#[allow(dead_code)]
fn main() {
    let err = run_example();
    println!("max parameter error {err:.2e}");
}
