//! Multi-anchor subgraph search: an approximate maximum common subgraph
//! between two salient-object graphs.
//!
//! 1. every node pair (p, q) seeds a search;
//! 2. the seed grows into an anchor list of mutually consistent pairs, up to
//!    `anchor_limit`;
//! 3. every other pair whose edges to all anchors agree is admitted, best first;
//! 4. the subgraph with the smallest discrepancy score wins.

mod oracle;

pub use oracle::{oracle_max_common_subgraph, ORACLE_MAX_NODES};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{profile_mismatch, EdgeFeatures, SalientObjectGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MassError {
    #[error("edge feature dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("graphs too large for exhaustive search ({n} x {m}, cap {cap})")]
    TooLarge { n: usize, m: usize, cap: usize },
    #[error("seed ({0}, {1}) out of range")]
    BadSeed(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMode {
    /// Expand each seed into a list of mutually consistent anchors.
    #[default]
    Multi,
    /// Use the seed pair as the only anchor.
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MassConfig {
    /// Two edges agree when their feature distance is below this.
    pub edge_threshold: f64,
    pub anchor_limit: usize,
    /// Exponent p in eps = sum(eps_e) / r^p.
    pub score_exponent: f64,
    pub min_subgraph_size: usize,
    /// Explore only this many seeds, ranked by distance-profile similarity.
    pub max_seeds: Option<usize>,
    pub anchor_mode: AnchorMode,
}

impl Default for MassConfig {
    fn default() -> Self {
        Self {
            edge_threshold: 0.5,
            anchor_limit: 3,
            score_exponent: 4.0,
            min_subgraph_size: 5,
            max_seeds: None,
            anchor_mode: AnchorMode::Multi,
        }
    }
}

impl MassConfig {
    pub fn validate(&self) -> Result<(), MassError> {
        let bad = |m: &str| Err(MassError::InvalidConfig(m.to_owned()));
        if !(self.edge_threshold > 0.0 && self.edge_threshold.is_finite()) {
            return bad("edge_threshold must be positive");
        }
        if self.anchor_limit < 2 {
            return bad("anchor_limit must be at least 2");
        }
        if self.min_subgraph_size < 3 {
            return bad("min_subgraph_size must be at least 3");
        }
        if !self.score_exponent.is_finite() {
            return bad("score_exponent must be finite");
        }
        if self.max_seeds == Some(0) {
            return bad("max_seeds must be positive when set");
        }
        Ok(())
    }
}

/// Mutually consistent node pairs (index in graph A, index in graph B).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorList {
    pub pairs: Vec<(usize, usize)>,
    pub limit: usize,
}

impl AnchorList {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonSubgraph {
    /// Partial injective mapping, anchors first.
    pub correspondences: Vec<(usize, usize)>,
    pub epsilon: f64,
    /// Discrepancy of every corresponding edge, ordered by (i, j), i < j,
    /// over positions in `correspondences`.
    pub edge_discrepancies: Vec<f64>,
    pub anchor_count: usize,
}

impl CommonSubgraph {
    pub fn size(&self) -> usize {
        self.correspondences.len()
    }

    /// Recomputes the score from the stored per-edge discrepancies.
    pub fn score_from_parts(&self, exponent: f64) -> f64 {
        score(self.edge_discrepancies.iter().sum(), self.size(), exponent)
    }

    pub fn swapped(&self) -> CommonSubgraph {
        CommonSubgraph {
            correspondences: self.correspondences.iter().map(|&(a, b)| (b, a)).collect(),
            ..self.clone()
        }
    }

    pub fn sorted_pairs(&self) -> Vec<(usize, usize)> {
        let mut v = self.correspondences.clone();
        v.sort_unstable();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MassOutcome {
    Match(CommonSubgraph),
    /// No subgraph reached the minimum size; `largest` is the biggest one found.
    NoMatch {
        largest: Option<CommonSubgraph>,
    },
}

impl MassOutcome {
    pub fn matched(&self) -> Option<&CommonSubgraph> {
        match self {
            MassOutcome::Match(s) => Some(s),
            MassOutcome::NoMatch { .. } => None,
        }
    }
}

pub(crate) fn score(sum: f64, size: usize, exponent: f64) -> f64 {
    if size == 0 {
        0.0
    } else {
        sum / (size as f64).powf(exponent)
    }
}

/// L2 distance between two edge feature vectors.
pub fn edge_discrepancy(wa: &[f64], wb: &[f64]) -> Result<f64, MassError> {
    if wa.len() != wb.len() {
        return Err(MassError::DimensionMismatch(wa.len(), wb.len()));
    }
    Ok(disc(wa, wb))
}

#[inline]
fn disc(wa: &[f64], wb: &[f64]) -> f64 {
    if wa.len() == 1 {
        return (wa[0] - wb[0]).abs();
    }
    wa.iter().zip(wb).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Scores a correspondence set over all of its internal edges.
pub fn evaluate_correspondences(
    wa: &EdgeFeatures,
    wb: &EdgeFeatures,
    correspondences: Vec<(usize, usize)>,
    anchor_count: usize,
    exponent: f64,
) -> CommonSubgraph {
    let r = correspondences.len();
    let mut edge_discrepancies = Vec::with_capacity(r * r.saturating_sub(1) / 2);
    for i in 0..r {
        for j in i + 1..r {
            let (p, q) = correspondences[i];
            let (u, v) = correspondences[j];
            edge_discrepancies.push(disc(wa.get(p, u), wb.get(q, v)));
        }
    }
    let epsilon = score(edge_discrepancies.iter().sum(), r, exponent);
    CommonSubgraph {
        correspondences,
        epsilon,
        edge_discrepancies,
        anchor_count,
    }
}

fn check_dims(wa: &EdgeFeatures, wb: &EdgeFeatures) -> Result<(), MassError> {
    if wa.dim() != wb.dim() {
        return Err(MassError::DimensionMismatch(wa.dim(), wb.dim()));
    }
    Ok(())
}

/// All n x m seed pairs in row-major order, or the `max_seeds` pairs with the
/// most similar sorted distance profiles when that cap is set.
pub fn init_seeds(ga: &SalientObjectGraph, gb: &SalientObjectGraph, cfg: &MassConfig) -> Vec<(usize, usize)> {
    let all: Vec<(usize, usize)> = (0..ga.len()).flat_map(|p| (0..gb.len()).map(move |q| (p, q))).collect();
    match cfg.max_seeds {
        Some(cap) if cap < all.len() => {
            let pa: Vec<Vec<f64>> = (0..ga.len()).map(|p| ga.distance_profile(p)).collect();
            let pb: Vec<Vec<f64>> = (0..gb.len()).map(|q| gb.distance_profile(q)).collect();
            let mut ranked: Vec<(f64, (usize, usize))> = all
                .into_iter()
                .map(|(p, q)| (profile_mismatch(&pa[p], &pb[q]), (p, q)))
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            ranked.truncate(cap);
            ranked.into_iter().map(|(_, s)| s).collect()
        }
        _ => all,
    }
}

/// Candidate pairs consistent with every anchor, with their summed discrepancy.
fn consistent_candidates(
    wa: &EdgeFeatures,
    wb: &EdgeFeatures,
    anchors: &[(usize, usize)],
    threshold: f64,
) -> Vec<(f64, usize, usize)> {
    let (n, m) = (wa.num_nodes(), wb.num_nodes());
    let mut used_a = vec![false; n];
    let mut used_b = vec![false; m];
    for &(p, q) in anchors {
        used_a[p] = true;
        used_b[q] = true;
    }
    let mut out = Vec::new();
    for u in (0..n).filter(|&u| !used_a[u]) {
        'cand: for v in (0..m).filter(|&v| !used_b[v]) {
            let mut sum = 0.0;
            for &(p, q) in anchors {
                let d = disc(wa.get(p, u), wb.get(q, v));
                if !(d < threshold) {
                    continue 'cand;
                }
                sum += d;
            }
            out.push((sum, u, v));
        }
    }
    out
}

fn by_mean_then_index(a: &(f64, usize, usize), b: &(f64, usize, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

/// Grows `seed` into an anchor list. At each step the pair consistent with
/// every current anchor and with the smallest mean discrepancy joins; ties go
/// to the lowest (u, v).
pub fn expand_anchors(
    wa: &EdgeFeatures,
    wb: &EdgeFeatures,
    seed: (usize, usize),
    cfg: &MassConfig,
) -> Result<AnchorList, MassError> {
    check_dims(wa, wb)?;
    if seed.0 >= wa.num_nodes() || seed.1 >= wb.num_nodes() {
        return Err(MassError::BadSeed(seed.0, seed.1));
    }
    Ok(expand_unchecked(wa, wb, seed, cfg))
}

fn expand_unchecked(wa: &EdgeFeatures, wb: &EdgeFeatures, seed: (usize, usize), cfg: &MassConfig) -> AnchorList {
    let mut pairs = vec![seed];
    // Every later anchor must agree with the seed, so filter once and narrow.
    let mut cands = consistent_candidates(wa, wb, &pairs, cfg.edge_threshold);
    while pairs.len() < cfg.anchor_limit {
        let Some(&(_, u, v)) = cands.iter().min_by(|a, b| by_mean_then_index(a, b)) else {
            break;
        };
        pairs.push((u, v));
        cands.retain_mut(|c| {
            if c.1 == u || c.2 == v {
                return false;
            }
            let d = disc(wa.get(u, c.1), wb.get(v, c.2));
            if d < cfg.edge_threshold {
                c.0 += d;
                true
            } else {
                false
            }
        });
    }
    AnchorList {
        pairs,
        limit: cfg.anchor_limit,
    }
}

/// Admits every pair whose edges to all anchors agree, smallest mean
/// discrepancy first, until no admissible pair is left.
pub fn grow_subgraph(
    wa: &EdgeFeatures,
    wb: &EdgeFeatures,
    anchors: &AnchorList,
    cfg: &MassConfig,
) -> Result<CommonSubgraph, MassError> {
    check_dims(wa, wb)?;
    if let Some(&(p, q)) = anchors
        .pairs
        .iter()
        .find(|&&(p, q)| p >= wa.num_nodes() || q >= wb.num_nodes())
    {
        return Err(MassError::BadSeed(p, q));
    }
    Ok(grow_unchecked(wa, wb, anchors, cfg))
}

fn grow_unchecked(wa: &EdgeFeatures, wb: &EdgeFeatures, anchors: &AnchorList, cfg: &MassConfig) -> CommonSubgraph {
    let mut cands = consistent_candidates(wa, wb, &anchors.pairs, cfg.edge_threshold);
    // The anchor count is the same for every candidate, so sums order like means.
    cands.sort_by(by_mean_then_index);
    let mut used_a = vec![false; wa.num_nodes()];
    let mut used_b = vec![false; wb.num_nodes()];
    let mut corr = anchors.pairs.clone();
    for &(p, q) in &corr {
        used_a[p] = true;
        used_b[q] = true;
    }
    for (_, u, v) in cands {
        if !used_a[u] && !used_b[v] {
            used_a[u] = true;
            used_b[v] = true;
            corr.push((u, v));
        }
    }
    evaluate_correspondences(wa, wb, corr, anchors.pairs.len(), cfg.score_exponent)
}

fn search_seed(wa: &EdgeFeatures, wb: &EdgeFeatures, seed: (usize, usize), cfg: &MassConfig) -> CommonSubgraph {
    let anchors = match cfg.anchor_mode {
        AnchorMode::Multi => expand_unchecked(wa, wb, seed, cfg),
        AnchorMode::Single => AnchorList {
            pairs: vec![seed],
            limit: 1,
        },
    };
    grow_unchecked(wa, wb, &anchors, cfg)
}

/// Full search. Among subgraphs with at least `min_subgraph_size` pairs, the
/// one with the smallest score wins; ties go to the larger subgraph, then to
/// the earlier seed.
pub fn mass(
    ga: &SalientObjectGraph,
    wa: &EdgeFeatures,
    gb: &SalientObjectGraph,
    wb: &EdgeFeatures,
    cfg: &MassConfig,
) -> Result<MassOutcome, MassError> {
    cfg.validate()?;
    check_dims(wa, wb)?;
    if wa.num_nodes() != ga.len() || wb.num_nodes() != gb.len() {
        return Err(MassError::InvalidConfig(
            "edge feature tensors do not match their graphs".into(),
        ));
    }
    let mut best: Option<CommonSubgraph> = None;
    let mut largest: Option<CommonSubgraph> = None;
    for seed in init_seeds(ga, gb, cfg) {
        let sub = search_seed(wa, wb, seed, cfg);
        if largest.as_ref().is_none_or(|l| sub.size() > l.size()) {
            largest = Some(sub.clone());
        }
        if sub.size() < cfg.min_subgraph_size {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => sub.epsilon < b.epsilon || (sub.epsilon == b.epsilon && sub.size() > b.size()),
        };
        if better {
            best = Some(sub);
        }
    }
    Ok(match best {
        Some(s) => MassOutcome::Match(s),
        None => MassOutcome::NoMatch { largest },
    })
}
