//! Salient-object graphs: one node per detected box, fully connected, with a
//! pairwise distance matrix and a per-edge feature tensor.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, PointSet2D};
use crate::sim::{AgentId, DetectionFrame};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("frame has no boxes")]
    EmptyFrame,
    #[error("frame has a non-finite box center at index {0}")]
    NonFinite(usize),
    #[error("bad correspondence: {0}")]
    BadCorrespondence(String),
}

/// Dense n x n x k tensor of edge feature vectors. The diagonal is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFeatures {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl EdgeFeatures {
    pub fn zeros(n: usize, k: usize) -> Self {
        Self {
            n,
            k,
            data: vec![0.0; n * n * k],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn get(&self, p: usize, q: usize) -> &[f64] {
        let o = (p * self.n + q) * self.k;
        &self.data[o..o + self.k]
    }

    pub fn get_mut(&mut self, p: usize, q: usize) -> &mut [f64] {
        let o = (p * self.n + q) * self.k;
        &mut self.data[o..o + self.k]
    }

    /// Writes `v` at both (p, q) and (q, p).
    pub fn set_symmetric(&mut self, p: usize, q: usize, v: &[f64]) {
        self.get_mut(p, q).copy_from_slice(v);
        self.get_mut(q, p).copy_from_slice(v);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub center: Point2,
    /// Index of the box in the source frame.
    pub source_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalientObjectGraph {
    pub agent: AgentId,
    pub local_time: i64,
    nodes: Vec<GraphNode>,
    distances: Vec<f64>,
    features: EdgeFeatures,
}

impl SalientObjectGraph {
    /// Builds the graph for `frame`. Nodes are sorted by (x, y, box index).
    /// Edge features start out as the scalar distance (k = 1).
    pub fn build(frame: &DetectionFrame) -> Result<Self, GraphError> {
        if frame.boxes.is_empty() {
            return Err(GraphError::EmptyFrame);
        }
        if let Some(i) = frame.boxes.iter().position(|b| !b.center().is_finite()) {
            return Err(GraphError::NonFinite(i));
        }
        let mut nodes: Vec<GraphNode> = frame
            .boxes
            .iter()
            .enumerate()
            .map(|(i, b)| GraphNode {
                center: b.center(),
                source_index: i,
            })
            .collect();
        nodes.sort_by(|a, b| {
            a.center
                .x
                .total_cmp(&b.center.x)
                .then(a.center.y.total_cmp(&b.center.y))
                .then(a.source_index.cmp(&b.source_index))
        });
        Ok(Self::from_nodes(frame.agent.clone(), frame.local_time, nodes))
    }

    /// A graph with no nodes, for frames without detections.
    pub fn empty(agent: AgentId, local_time: i64) -> Self {
        Self::from_nodes(agent, local_time, Vec::new())
    }

    fn from_nodes(agent: AgentId, local_time: i64, nodes: Vec<GraphNode>) -> Self {
        let n = nodes.len();
        let mut distances = vec![0.0; n * n];
        let mut features = EdgeFeatures::zeros(n, 1);
        for p in 0..n {
            for q in p + 1..n {
                let d = nodes[p].center.distance(&nodes[q].center);
                distances[p * n + q] = d;
                distances[q * n + p] = d;
                features.set_symmetric(p, q, &[d]);
            }
        }
        Self {
            agent,
            local_time,
            nodes,
            distances,
            features,
        }
    }

    /// Builds a graph over the given nodes without reordering them.
    pub fn from_points_unsorted(points: &[Point2]) -> Self {
        let nodes = points
            .iter()
            .enumerate()
            .map(|(i, &center)| GraphNode {
                center,
                source_index: i,
            })
            .collect();
        Self::from_nodes(AgentId::from("anonymous"), 0, nodes)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn distance(&self, p: usize, q: usize) -> f64 {
        self.distances[p * self.nodes.len() + q]
    }

    pub fn distance_row(&self, p: usize) -> &[f64] {
        let n = self.nodes.len();
        &self.distances[p * n..(p + 1) * n]
    }

    /// Handcrafted edge features, W[p][q] = [R[p][q]].
    pub fn features(&self) -> &EdgeFeatures {
        &self.features
    }

    /// Distances from `p` to every other node, ascending.
    pub fn distance_profile(&self, p: usize) -> Vec<f64> {
        let mut row: Vec<f64> = self
            .distance_row(p)
            .iter()
            .enumerate()
            .filter(|&(q, _)| q != p)
            .map(|(_, &d)| d)
            .collect();
        row.sort_by(f64::total_cmp);
        row
    }

    pub fn centers(&self, indices: &[usize]) -> PointSet2D {
        PointSet2D::new(indices.iter().map(|&i| self.nodes[i].center).collect()).expect("graph centers are finite")
    }

    /// Same graph with its nodes reordered: new node i is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let nodes = perm.iter().map(|&i| self.nodes[i]).collect();
        Self::from_nodes(self.agent.clone(), self.local_time, nodes)
    }
}

/// Largest |R_a - R_b| over all edges between corresponding node pairs.
pub fn graph_invariance_check(
    ga: &SalientObjectGraph,
    gb: &SalientObjectGraph,
    correspondence: &[(usize, usize)],
) -> Result<f64, GraphError> {
    if let Some(&(a, b)) = correspondence.iter().find(|&&(a, b)| a >= ga.len() || b >= gb.len()) {
        return Err(GraphError::BadCorrespondence(format!(
            "pair ({a}, {b}) out of range for graphs of size {} and {}",
            ga.len(),
            gb.len()
        )));
    }
    let mut worst: f64 = 0.0;
    for (i, &(pa, pb)) in correspondence.iter().enumerate() {
        for &(qa, qb) in &correspondence[i + 1..] {
            worst = worst.max((ga.distance(pa, qa) - gb.distance(pb, qb)).abs());
        }
    }
    Ok(worst)
}

/// Mean absolute difference between two ascending distance profiles over their common prefix.
pub fn profile_mismatch(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().min(b.len());
    if len == 0 {
        return match a.len().cmp(&b.len()) {
            Ordering::Equal => 0.0,
            _ => f64::INFINITY,
        };
    }
    a.iter().zip(b).take(len).map(|(x, y)| (x - y).abs()).sum::<f64>() / len as f64
}
