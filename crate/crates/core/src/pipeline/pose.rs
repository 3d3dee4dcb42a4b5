use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rigid_fit, Point2, PointSet2D, RigidTransform2D};
use crate::graph::SalientObjectGraph;
use crate::mass::CommonSubgraph;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("need at least 3 correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("correspondence index out of range")]
    BadCorrespondence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PoseMethod {
    #[default]
    Ransac,
    Lmeds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseConfig {
    pub method: PoseMethod,
    pub iterations: usize,
    /// RANSAC inlier radius in meters.
    pub inlier_radius: f64,
    pub seed: u64,
}

impl Default for PoseConfig {
    fn default() -> Self {
        Self {
            method: PoseMethod::Ransac,
            iterations: 200,
            inlier_radius: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    /// Maps source (collaborator) coordinates onto target (ego) coordinates.
    pub transform: RigidTransform2D,
    /// Positions in the correspondence list that support the final fit.
    pub inliers: Vec<usize>,
}

/// Points closer than this are treated as coincident.
const COINCIDENT: f64 = 1e-6;
/// RMS distance from the best-fit line below which a set counts as collinear.
const COLLINEAR: f64 = 1e-6;

/// Robust rigid fit of `subgraph` (ego index, collaborator index) pairs:
/// the result maps collaborator coordinates into the ego graph's frame.
pub fn estimate_pose(
    subgraph: &CommonSubgraph,
    ego: &SalientObjectGraph,
    collab: &SalientObjectGraph,
    cfg: &PoseConfig,
) -> Result<PoseEstimate, PoseError> {
    let mut src = Vec::with_capacity(subgraph.size());
    let mut dst = Vec::with_capacity(subgraph.size());
    for &(p, q) in &subgraph.correspondences {
        if p >= ego.len() || q >= collab.len() {
            return Err(PoseError::BadCorrespondence);
        }
        dst.push(ego.nodes()[p].center);
        src.push(collab.nodes()[q].center);
    }
    robust_rigid_fit(&src, &dst, cfg)
}

/// RMS distance of the points from their principal axis.
fn line_spread(pts: &[Point2]) -> f64 {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.x / n, a.1 + p.y / n));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += dx * dx / n;
        syy += dy * dy / n;
        sxy += dx * dy / n;
    }
    let half_tr = 0.5 * (sxx + syy);
    let det = sxx * syy - sxy * sxy;
    let small = half_tr - (half_tr * half_tr - det).max(0.0).sqrt();
    small.max(0.0).sqrt()
}

fn fit(src: &[Point2], dst: &[Point2], idx: &[usize]) -> Option<RigidTransform2D> {
    let s = PointSet2D::new(idx.iter().map(|&i| src[i]).collect()).ok()?;
    let d = PointSet2D::new(idx.iter().map(|&i| dst[i]).collect()).ok()?;
    rigid_fit(&s, &d).ok()
}

fn squared_residuals(t: &RigidTransform2D, src: &[Point2], dst: &[Point2]) -> Vec<f64> {
    src.iter()
        .zip(dst)
        .map(|(s, d)| {
            let p = t.apply(s);
            (p.x - d.x).powi(2) + (p.y - d.y).powi(2)
        })
        .collect()
}

/// Minimal 2-point samples: every pair when that is no more than the
/// iteration budget, otherwise `iterations` seeded random draws.
fn minimal_samples(n: usize, cfg: &PoseConfig) -> Vec<(usize, usize)> {
    if n * (n - 1) / 2 <= cfg.iterations {
        return (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.iterations)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect()
}

/// RANSAC or LMedS over point correspondences `src[i] -> dst[i]`.
pub fn robust_rigid_fit(src: &[Point2], dst: &[Point2], cfg: &PoseConfig) -> Result<PoseEstimate, PoseError> {
    let n = src.len();
    if n < 3 || dst.len() != n {
        return Err(PoseError::TooFewCorrespondences(n.min(dst.len())));
    }
    if line_spread(src) <= COLLINEAR || line_spread(dst) <= COLLINEAR {
        return Err(PoseError::DegenerateGeometry("correspondences are collinear"));
    }
    let hypotheses: Vec<RigidTransform2D> = minimal_samples(n, cfg)
        .into_iter()
        .filter(|&(i, j)| src[i].distance(&src[j]) > COINCIDENT && dst[i].distance(&dst[j]) > COINCIDENT)
        .filter_map(|(i, j)| fit(src, dst, &[i, j]))
        .collect();
    if hypotheses.is_empty() {
        return Err(PoseError::DegenerateGeometry("all minimal samples are coincident"));
    }
    let inliers = match cfg.method {
        PoseMethod::Ransac => ransac_inliers(&hypotheses, src, dst, cfg.inlier_radius),
        PoseMethod::Lmeds => lmeds_inliers(&hypotheses, src, dst),
    };
    let transform = fit(src, dst, &inliers).ok_or(PoseError::DegenerateGeometry("inlier set is coincident"))?;
    Ok(PoseEstimate { transform, inliers })
}

fn ransac_inliers(hyps: &[RigidTransform2D], src: &[Point2], dst: &[Point2], radius: f64) -> Vec<usize> {
    let r2 = radius * radius;
    let mut best: (usize, f64, Vec<usize>) = (0, f64::INFINITY, Vec::new());
    for t in hyps {
        let res = squared_residuals(t, src, dst);
        let inl: Vec<usize> = (0..res.len()).filter(|&i| res[i] < r2).collect();
        let cost: f64 = inl.iter().map(|&i| res[i]).sum();
        if inl.len() > best.0 || (inl.len() == best.0 && cost < best.1) {
            best = (inl.len(), cost, inl);
        }
    }
    best.2
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn lmeds_inliers(hyps: &[RigidTransform2D], src: &[Point2], dst: &[Point2]) -> Vec<usize> {
    let n = src.len();
    let mut best = (f64::INFINITY, RigidTransform2D::identity());
    for t in hyps {
        let med = median(squared_residuals(t, src, dst));
        if med < best.0 {
            best = (med, *t);
        }
    }
    // Robust scale from the median residual with the usual small-sample correction.
    let sigma = 1.4826 * (1.0 + 5.0 / (n as f64 - 2.0)) * best.0.sqrt();
    let cutoff = (2.5 * sigma).max(1e-6);
    let res = squared_residuals(&best.1, src, dst);
    (0..n).filter(|&i| res[i].sqrt() <= cutoff).collect()
}
