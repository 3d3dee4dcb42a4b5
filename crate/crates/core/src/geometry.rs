//! Planar rigid-body geometry: poses, transforms and the closed-form
//! least-squares rigid fit used by the robust pose estimators.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("point sets differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Agent pose in a world frame. Heading is counterclockwise-positive.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    /// The transform mapping points in this pose's body frame into the world frame.
    pub fn to_transform(&self) -> RigidTransform2D {
        RigidTransform2D::new(self.theta, self.x, self.y)
    }

    pub fn from_transform(t: &RigidTransform2D) -> Self {
        Self::new(t.tx, t.ty, t.rotation)
    }
}

/// A planar rotation followed by a translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform2D {
    pub rotation: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for RigidTransform2D {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform2D {
    pub fn new(rotation: f64, tx: f64, ty: f64) -> Self {
        Self {
            rotation: normalize_angle(rotation),
            tx,
            ty,
        }
    }

    pub const fn identity() -> Self {
        Self {
            rotation: 0.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    pub fn translation(&self) -> Point2 {
        Point2::new(self.tx, self.ty)
    }

    pub fn apply(&self, p: &Point2) -> Point2 {
        let (s, c) = self.rotation.sin_cos();
        Point2::new(c * p.x - s * p.y + self.tx, s * p.x + c * p.y + self.ty)
    }

    /// `self.compose(other)` applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform2D) -> RigidTransform2D {
        let t = self.apply(&other.translation());
        RigidTransform2D::new(self.rotation + other.rotation, t.x, t.y)
    }

    pub fn inverse(&self) -> RigidTransform2D {
        let (s, c) = self.rotation.sin_cos();
        RigidTransform2D::new(
            -self.rotation,
            -(c * self.tx + s * self.ty),
            -(-s * self.tx + c * self.ty),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.is_finite() && self.tx.is_finite() && self.ty.is_finite()
    }

    /// Largest absolute componentwise difference, with the angle compared on the circle.
    pub fn max_abs_diff(&self, other: &RigidTransform2D) -> f64 {
        normalize_angle(self.rotation - other.rotation)
            .abs()
            .max((self.tx - other.tx).abs())
            .max((self.ty - other.ty).abs())
    }
}

/// The transform taking points expressed in `other`'s body frame into `ego`'s body frame.
pub fn relative_pose(ego: &Pose2D, other: &Pose2D) -> RigidTransform2D {
    ego.to_transform().inverse().compose(&other.to_transform())
}

/// An ordered set of finite planar points.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct PointSet2D(Vec<Point2>);

impl PointSet2D {
    pub fn new(points: Vec<Point2>) -> Result<Self, GeometryError> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        Ok(Self(points))
    }

    pub fn from_xy(coords: &[(f64, f64)]) -> Result<Self, GeometryError> {
        Self::new(coords.iter().map(|&(x, y)| Point2::new(x, y)).collect())
    }

    pub fn points(&self) -> &[Point2] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn centroid(&self) -> Option<Point2> {
        if self.0.is_empty() {
            return None;
        }
        let n = self.0.len() as f64;
        let (sx, sy) = self.0.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Some(Point2::new(sx / n, sy / n))
    }

    pub fn subset(&self, indices: &[usize]) -> PointSet2D {
        PointSet2D(indices.iter().map(|&i| self.0[i]).collect())
    }
}

impl TryFrom<Vec<Point2>> for PointSet2D {
    type Error = GeometryError;
    fn try_from(v: Vec<Point2>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<PointSet2D> for Vec<Point2> {
    fn from(p: PointSet2D) -> Self {
        p.0
    }
}

pub fn apply_transform(t: &RigidTransform2D, pts: &PointSet2D) -> PointSet2D {
    PointSet2D(pts.0.iter().map(|p| t.apply(p)).collect())
}

/// Sum of squared residuals of `t` mapping `src` onto `dst`.
pub fn sum_squared_residuals(t: &RigidTransform2D, src: &PointSet2D, dst: &PointSet2D) -> f64 {
    src.0
        .iter()
        .zip(&dst.0)
        .map(|(s, d)| {
            let m = t.apply(s);
            (m.x - d.x).powi(2) + (m.y - d.y).powi(2)
        })
        .sum()
}

// Below this spread (m^2 summed) the source set is treated as a single point.
const COINCIDENT_SPREAD: f64 = 1e-18;

/// Least-squares rotation + translation taking `src` onto `dst`.
///
/// Centers both sets, accumulates the 2x2 cross-covariance and reads the
/// rotation angle directly from it. Reflections are never returned.
pub fn rigid_fit(src: &PointSet2D, dst: &PointSet2D) -> Result<RigidTransform2D, GeometryError> {
    if src.len() != dst.len() {
        return Err(GeometryError::LengthMismatch(src.len(), dst.len()));
    }
    if src.len() < 2 {
        return Err(GeometryError::DegenerateInput("fewer than two points"));
    }
    let cs = src.centroid().expect("nonempty");
    let cd = dst.centroid().expect("nonempty");
    let mut dot = 0.0;
    let mut cross = 0.0;
    let mut spread = 0.0;
    for (s, d) in src.0.iter().zip(&dst.0) {
        let (ax, ay) = (s.x - cs.x, s.y - cs.y);
        let (bx, by) = (d.x - cd.x, d.y - cd.y);
        dot += ax * bx + ay * by;
        cross += ax * by - ay * bx;
        spread += ax * ax + ay * ay;
    }
    if spread <= COINCIDENT_SPREAD {
        return Err(GeometryError::DegenerateInput("source points coincide"));
    }
    if dot == 0.0 && cross == 0.0 {
        return Err(GeometryError::DegenerateInput("target points coincide"));
    }
    let rotation = cross.atan2(dot);
    let (s, c) = rotation.sin_cos();
    let tx = cd.x - (c * cs.x - s * cs.y);
    let ty = cd.y - (s * cs.x + c * cs.y);
    Ok(RigidTransform2D::new(rotation, tx, ty))
}
