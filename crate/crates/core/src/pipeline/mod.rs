//! Device-free alignment of one collaborator message against the ego's
//! recent history: buffer, temporal matching, robust pose, latency.

mod pose;

pub use pose::{estimate_pose, robust_rigid_fit, PoseConfig, PoseError, PoseEstimate, PoseMethod};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{embed_edges, EmbeddingError, EmbeddingParams};
use crate::geometry::RigidTransform2D;
use crate::graph::{EdgeFeatures, GraphError, SalientObjectGraph};
use crate::mass::{mass, CommonSubgraph, MassConfig, MassError, MassOutcome};
use crate::sim::DetectionFrame;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("frame at {got} ms does not follow the newest buffered frame (expected {expected} ms)")]
    OutOfOrderFrame { expected: i64, got: i64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Mass(#[from] MassError),
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
}

/// Where edge features come from.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum EdgeModel {
    /// Raw pairwise distances.
    #[default]
    Handcrafted,
    /// Trained network with its calibrated match threshold.
    Learned { params: EmbeddingParams, threshold: f64 },
}

impl EdgeModel {
    pub fn features(&self, g: &SalientObjectGraph) -> Result<EdgeFeatures, EmbeddingError> {
        match self {
            EdgeModel::Handcrafted => Ok(g.features().clone()),
            EdgeModel::Learned { params, .. } => embed_edges(params, g),
        }
    }

    /// `base` with the edge threshold that suits this feature space.
    pub fn mass_config(&self, base: &MassConfig) -> MassConfig {
        match self {
            EdgeModel::Handcrafted => base.clone(),
            EdgeModel::Learned { threshold, .. } => MassConfig {
                edge_threshold: *threshold,
                ..base.clone()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// History length l; the buffer holds l + 1 graphs.
    pub buffer_len: usize,
    pub tau_ms: i64,
    /// Buffer entries whose scores differ by less than this are a tie.
    pub tie_tolerance: f64,
    pub mass: MassConfig,
    pub pose: PoseConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            buffer_len: 10,
            tau_ms: 100,
            tie_tolerance: 1e-6,
            mass: MassConfig::default(),
            pose: PoseConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.tau_ms <= 0 {
            return Err(PipelineError::InvalidConfig("tau_ms must be positive".into()));
        }
        if !(self.tie_tolerance >= 0.0) {
            return Err(PipelineError::InvalidConfig("tie_tolerance must be nonnegative".into()));
        }
        if self.pose.iterations == 0 || !(self.pose.inlier_radius > 0.0) {
            return Err(PipelineError::InvalidConfig(
                "pose iterations and inlier_radius must be positive".into(),
            ));
        }
        self.mass.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BufferEntry {
    pub local_time: i64,
    pub graph: SalientObjectGraph,
    pub features: EdgeFeatures,
    /// Maps this entry's coordinates into the newest entry's frame.
    pub to_current: RigidTransform2D,
}

/// The ego's last l + 1 graphs, newest first.
#[derive(Debug, Clone)]
pub struct GraphBuffer {
    capacity: usize,
    tau_ms: i64,
    model: EdgeModel,
    entries: VecDeque<BufferEntry>,
}

impl GraphBuffer {
    pub fn new(buffer_len: usize, tau_ms: i64, model: EdgeModel) -> Self {
        Self {
            capacity: buffer_len + 1,
            tau_ms,
            model,
            entries: VecDeque::with_capacity(buffer_len + 1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &BufferEntry> {
        self.entries.iter()
    }

    pub fn entry(&self, i: usize) -> Option<&BufferEntry> {
        self.entries.get(i)
    }

    pub fn newest_time(&self) -> Option<i64> {
        self.entries.front().map(|e| e.local_time)
    }

    pub fn model(&self) -> &EdgeModel {
        &self.model
    }

    /// Adds the ego's newest frame. `odom_increment` maps the previous newest
    /// frame into this one and is ignored for the first push.
    pub fn push_frame(
        &mut self,
        frame: &DetectionFrame,
        odom_increment: &RigidTransform2D,
    ) -> Result<(), PipelineError> {
        if let Some(newest) = self.newest_time() {
            let expected = newest + self.tau_ms;
            if (frame.local_time - expected).abs() * 10 > self.tau_ms {
                return Err(PipelineError::OutOfOrderFrame {
                    expected,
                    got: frame.local_time,
                });
            }
        }
        let graph = if frame.boxes.is_empty() {
            SalientObjectGraph::empty(frame.agent.clone(), frame.local_time)
        } else {
            SalientObjectGraph::build(frame)?
        };
        let features = if graph.len() >= 2 {
            self.model.features(&graph)?
        } else {
            EdgeFeatures::zeros(graph.len(), graph.features().dim())
        };
        for e in self.entries.iter_mut() {
            e.to_current = odom_increment.compose(&e.to_current);
        }
        self.entries.push_front(BufferEntry {
            local_time: frame.local_time,
            graph,
            features,
            to_current: RigidTransform2D::identity(),
        });
        self.entries.truncate(self.capacity);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    EmptyBuffer,
    /// Collaborator graph too small to match.
    EmptyMessage,
    /// No buffered graph shares a large enough common subgraph.
    NoMatch,
    DegenerateGeometry,
    /// Robust fit kept fewer inliers than the minimum subgraph size.
    TooFewInliers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalMatch {
    /// Buffer position, 0 = newest.
    pub index: usize,
    pub subgraph: CommonSubgraph,
    /// Score of each buffer entry, `None` where no subgraph reached the minimum size.
    pub scores: Vec<Option<f64>>,
    /// Several entries scored within the tie tolerance; the newest was taken.
    pub ambiguous_time: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TemporalOutcome {
    Matched(TemporalMatch),
    Rejected { largest: usize },
}

/// Matches `collab` against every buffered graph and keeps the smallest score.
pub fn temporal_align(
    buffer: &GraphBuffer,
    collab: &SalientObjectGraph,
    collab_features: &EdgeFeatures,
    cfg: &PipelineConfig,
) -> Result<TemporalOutcome, PipelineError> {
    let mcfg = buffer.model.mass_config(&cfg.mass);
    let mut scores = Vec::with_capacity(buffer.len());
    let mut subgraphs = Vec::with_capacity(buffer.len());
    let mut largest = 0;
    for e in buffer.entries() {
        let out = if e.graph.is_empty() || collab.is_empty() {
            MassOutcome::NoMatch { largest: None }
        } else {
            mass(&e.graph, &e.features, collab, collab_features, &mcfg)?
        };
        match out {
            MassOutcome::Match(s) => {
                largest = largest.max(s.size());
                scores.push(Some(s.epsilon));
                subgraphs.push(Some(s));
            }
            MassOutcome::NoMatch { largest: l } => {
                largest = largest.max(l.map_or(0, |s| s.size()));
                scores.push(None);
                subgraphs.push(None);
            }
        }
    }
    let Some(best) = scores.iter().flatten().copied().min_by(f64::total_cmp) else {
        return Ok(TemporalOutcome::Rejected { largest });
    };
    let near: Vec<usize> = (0..scores.len())
        .filter(|&i| scores[i].is_some_and(|s| s - best <= cfg.tie_tolerance))
        .collect();
    let index = near[0];
    Ok(TemporalOutcome::Matched(TemporalMatch {
        index,
        subgraph: subgraphs[index].take().expect("scored entry has a subgraph"),
        scores,
        ambiguous_time: near.len() > 1,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// Maps the collaborator's capture frame into the ego's current frame.
    pub relative_pose: RigidTransform2D,
    pub matched_index: usize,
    pub matched_ego_time: i64,
    pub latency_estimate_ms: i64,
    /// Estimated latency minus the advertised one, when given.
    pub clock_deviation_estimate_ms: Option<i64>,
    pub subgraph: CommonSubgraph,
    pub inliers: Vec<usize>,
    pub ambiguous_time: bool,
}

impl Alignment {
    pub fn confidence(&self) -> f64 {
        self.subgraph.epsilon
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AlignmentResult {
    Aligned(Alignment),
    Rejected { reason: RejectReason },
}

impl AlignmentResult {
    pub fn aligned(&self) -> Option<&Alignment> {
        match self {
            AlignmentResult::Aligned(a) => Some(a),
            AlignmentResult::Rejected { .. } => None,
        }
    }

    pub fn is_rejected(&self) -> bool {
        matches!(self, AlignmentResult::Rejected { .. })
    }
}

fn reject(reason: RejectReason) -> AlignmentResult {
    AlignmentResult::Rejected { reason }
}

/// Aligns one collaborator frame against the ego buffer. Every failure to
/// align, including malformed input, comes back as a rejection.
pub fn free_align(
    buffer: &GraphBuffer,
    collab_frame: &DetectionFrame,
    advertised_latency_ms: Option<i64>,
    cfg: &PipelineConfig,
) -> AlignmentResult {
    let Some(now) = buffer.newest_time() else {
        return reject(RejectReason::EmptyBuffer);
    };
    let Ok(collab) = SalientObjectGraph::build(collab_frame) else {
        return reject(RejectReason::EmptyMessage);
    };
    if collab.len() < cfg.mass.min_subgraph_size {
        return reject(RejectReason::EmptyMessage);
    }
    let Ok(features) = buffer.model.features(&collab) else {
        return reject(RejectReason::EmptyMessage);
    };
    let m = match temporal_align(buffer, &collab, &features, cfg) {
        Ok(TemporalOutcome::Matched(m)) => m,
        Ok(TemporalOutcome::Rejected { .. }) | Err(_) => return reject(RejectReason::NoMatch),
    };
    let entry = buffer.entry(m.index).expect("matched index is buffered");
    let est = match estimate_pose(&m.subgraph, &entry.graph, &collab, &cfg.pose) {
        Ok(e) => e,
        Err(_) => return reject(RejectReason::DegenerateGeometry),
    };
    if est.inliers.len() < cfg.mass.min_subgraph_size {
        return reject(RejectReason::TooFewInliers);
    }
    let latency = now - entry.local_time;
    AlignmentResult::Aligned(Alignment {
        relative_pose: entry.to_current.compose(&est.transform),
        matched_index: m.index,
        matched_ego_time: entry.local_time,
        latency_estimate_ms: latency,
        clock_deviation_estimate_ms: advertised_latency_ms.map(|a| latency - a),
        subgraph: m.subgraph,
        inliers: est.inliers,
        ambiguous_time: m.ambiguous_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use crate::sim::{AgentId, DetectedBox};

    fn frame(t: i64, pts: &[(f64, f64)]) -> DetectionFrame {
        let boxes = pts
            .iter()
            .map(|&(x, y)| DetectedBox {
                x,
                y,
                yaw: 0.0,
                truth_id: None,
            })
            .collect();
        DetectionFrame::new(AgentId::from("ego"), t, boxes).unwrap()
    }

    const PTS: [(f64, f64); 6] = [
        (0.0, 0.0),
        (7.0, 1.0),
        (-3.0, 9.0),
        (12.0, -6.0),
        (4.0, 15.0),
        (-9.0, -4.0),
    ];

    #[test]
    fn first_push_stores_identity() {
        let mut b = GraphBuffer::new(3, 100, EdgeModel::Handcrafted);
        b.push_frame(&frame(0, &PTS), &RigidTransform2D::new(1.0, 2.0, 3.0))
            .unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.entry(0).unwrap().to_current, RigidTransform2D::identity());
    }

    #[test]
    fn capacity_evicts_oldest() {
        let mut b = GraphBuffer::new(3, 100, EdgeModel::Handcrafted);
        for k in 0..5 {
            b.push_frame(&frame(k * 100, &PTS), &RigidTransform2D::identity())
                .unwrap();
        }
        assert_eq!(b.len(), 4);
        let times: Vec<i64> = b.entries().map(|e| e.local_time).collect();
        assert_eq!(times, vec![400, 300, 200, 100]);
    }

    #[test]
    fn out_of_order_frames_rejected() {
        let mut b = GraphBuffer::new(3, 100, EdgeModel::Handcrafted);
        b.push_frame(&frame(0, &PTS), &RigidTransform2D::identity()).unwrap();
        assert!(b.push_frame(&frame(109, &PTS), &RigidTransform2D::identity()).is_ok());
        assert_eq!(
            b.push_frame(&frame(250, &PTS), &RigidTransform2D::identity()),
            Err(PipelineError::OutOfOrderFrame {
                expected: 209,
                got: 250
            })
        );
        assert!(b.push_frame(&frame(109, &PTS), &RigidTransform2D::identity()).is_err());
    }

    #[test]
    fn straight_line_odometry_accumulates() {
        // Moving 1 m forward per frame: old points appear 1 m further back each step.
        let mut b = GraphBuffer::new(10, 100, EdgeModel::Handcrafted);
        let step = RigidTransform2D::new(0.0, -1.0, 0.0);
        for k in 0..6 {
            b.push_frame(&frame(k * 100, &PTS), &step).unwrap();
        }
        let oldest = b.entries().last().unwrap().to_current;
        assert!((oldest.tx + 5.0).abs() < 1e-12 && oldest.ty.abs() < 1e-12);
    }

    #[test]
    fn odometry_composition_matches_hand_fold() {
        let incs = [
            RigidTransform2D::new(0.1, 1.0, 0.0),
            RigidTransform2D::new(-0.2, 0.5, 0.3),
            RigidTransform2D::new(0.05, 0.9, -0.1),
        ];
        let mut b = GraphBuffer::new(5, 100, EdgeModel::Handcrafted);
        b.push_frame(&frame(0, &PTS), &RigidTransform2D::identity()).unwrap();
        for (k, inc) in incs.iter().enumerate() {
            b.push_frame(&frame((k as i64 + 1) * 100, &PTS), inc).unwrap();
        }
        // Apply the increments to a point step by step.
        let p = Point2::new(3.0, -2.0);
        let mut q = p;
        for inc in &incs {
            q = inc.apply(&q);
        }
        let r = b.entry(3).unwrap().to_current.apply(&p);
        assert!(q.distance(&r) < 1e-12);
    }

    #[test]
    fn zero_latency_identity_odometry_matches_estimate_pose() {
        let t = RigidTransform2D::new(0.7, 4.0, -2.0);
        let mut b = GraphBuffer::new(2, 100, EdgeModel::Handcrafted);
        b.push_frame(&frame(0, &PTS), &RigidTransform2D::identity()).unwrap();
        b.push_frame(&frame(100, &PTS), &RigidTransform2D::identity()).unwrap();
        let inv = t.inverse();
        let moved: Vec<(f64, f64)> = PTS
            .iter()
            .map(|&(x, y)| {
                let p = inv.apply(&Point2::new(x, y));
                (p.x, p.y)
            })
            .collect();
        let collab = frame(0, &moved);
        let cfg = PipelineConfig::default();
        let r = free_align(&b, &collab, Some(0), &cfg);
        let a = r.aligned().unwrap();
        assert!(a.relative_pose.max_abs_diff(&t) < 1e-9);
        let g = SalientObjectGraph::build(&collab).unwrap();
        let e = estimate_pose(&a.subgraph, &b.entry(a.matched_index).unwrap().graph, &g, &cfg.pose).unwrap();
        assert_eq!(a.relative_pose, e.transform);
        // Identical history: every entry ties, the newest wins.
        assert!(a.ambiguous_time);
        assert_eq!(a.latency_estimate_ms, 0);
    }

    #[test]
    fn tiny_overlap_is_rejected() {
        let mut b = GraphBuffer::new(2, 100, EdgeModel::Handcrafted);
        b.push_frame(&frame(0, &PTS), &RigidTransform2D::identity()).unwrap();
        let collab = frame(0, &[(0.0, 0.0), (7.0, 1.0), (200.0, 200.0), (-150.0, 90.0)]);
        let cfg = PipelineConfig {
            mass: MassConfig {
                min_subgraph_size: 3,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(free_align(&b, &collab, None, &cfg).is_rejected());
    }

    #[test]
    fn empty_frames_are_buffered() {
        let mut b = GraphBuffer::new(2, 100, EdgeModel::Handcrafted);
        b.push_frame(&frame(0, &PTS), &RigidTransform2D::identity()).unwrap();
        b.push_frame(&frame(100, &[]), &RigidTransform2D::identity()).unwrap();
        assert!(b.entry(0).unwrap().graph.is_empty());
        let r = free_align(&b, &frame(0, &PTS), None, &PipelineConfig::default());
        assert_eq!(r.aligned().unwrap().matched_index, 1);
    }

    #[test]
    fn empty_buffer_is_rejected() {
        let b = GraphBuffer::new(2, 100, EdgeModel::Handcrafted);
        assert_eq!(
            free_align(&b, &frame(0, &PTS), None, &PipelineConfig::default()),
            AlignmentResult::Rejected {
                reason: RejectReason::EmptyBuffer
            }
        );
    }
}
