use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{backward, fold_edge_gradient, forward, to_edge_features, GraphInput};
use super::{EmbeddingError, EmbeddingParams};
use crate::graph::{EdgeFeatures, GraphError, SalientObjectGraph};
use crate::sim::DetectionFrame;

/// An edge of graph A paired with an edge of graph B.
pub type EdgePair = ((usize, usize), (usize, usize));

/// Two graphs of the same scene with matched and unmatched edge pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub graph_a: SalientObjectGraph,
    pub graph_b: SalientObjectGraph,
    pub matched: Vec<EdgePair>,
    pub unmatched: Vec<EdgePair>,
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

impl TrainingPair {
    /// Node correspondences derived from truth ids carried by the frames.
    pub fn node_correspondence(
        ga: &SalientObjectGraph,
        fa: &DetectionFrame,
        gb: &SalientObjectGraph,
        fb: &DetectionFrame,
    ) -> Vec<(usize, usize)> {
        let id_of = |g: &SalientObjectGraph, f: &DetectionFrame, i: usize| f.boxes[g.nodes()[i].source_index].truth_id;
        let mut out = Vec::new();
        for p in 0..ga.len() {
            let Some(id) = id_of(ga, fa, p) else { continue };
            if let Some(q) = (0..gb.len()).find(|&q| id_of(gb, fb, q) == Some(id)) {
                out.push((p, q));
            }
        }
        out
    }

    /// Builds a pair from two truth-carrying frames. Matched edges are all
    /// edges between shared objects; `|U| = |M|` negatives are drawn
    /// uniformly from cross-graph edge pairs that do not match.
    pub fn from_frames(fa: &DetectionFrame, fb: &DetectionFrame, seed: u64) -> Result<Option<Self>, GraphError> {
        let ga = SalientObjectGraph::build(fa)?;
        let gb = SalientObjectGraph::build(fb)?;
        let corr = Self::node_correspondence(&ga, fa, &gb, fb);
        if corr.len() < 2 || ga.len() < 3 || gb.len() < 3 {
            return Ok(None);
        }
        let mut matched = Vec::new();
        for (i, &(p, e)) in corr.iter().enumerate() {
            for &(q, f) in &corr[i + 1..] {
                matched.push(((p, q), (e, f)));
            }
        }
        let partner = |p: usize| corr.iter().find(|c| c.0 == p).map(|c| c.1);
        let is_match = |(p, q): (usize, usize), (u, v): (usize, usize)| match (partner(p), partner(q)) {
            (Some(a), Some(b)) => (a == u && b == v) || (a == v && b == u),
            _ => false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut unmatched = Vec::with_capacity(matched.len());
        let random_edge = |rng: &mut ChaCha8Rng, n: usize| {
            let p = rng.random_range(0..n);
            let mut q = rng.random_range(0..n - 1);
            if q >= p {
                q += 1;
            }
            (p.min(q), p.max(q))
        };
        while unmatched.len() < matched.len() {
            let a = random_edge(&mut rng, ga.len());
            let b = random_edge(&mut rng, gb.len());
            if !is_match(a, b) {
                unmatched.push((a, b));
            }
        }
        Ok(Some(Self {
            graph_a: ga,
            graph_b: gb,
            matched,
            unmatched,
        }))
    }
}

/// Loss plus its gradients with respect to both feature tensors.
pub(crate) struct LossGrad {
    pub loss: f64,
    pub d_a: EdgeFeatures,
    pub d_b: EdgeFeatures,
}

pub(crate) fn contrastive_with_grad(
    wa: &EdgeFeatures,
    wb: &EdgeFeatures,
    matched: &[EdgePair],
    unmatched: &[EdgePair],
    margin: f64,
) -> Result<LossGrad, EmbeddingError> {
    if matched.is_empty() && unmatched.is_empty() {
        return Err(EmbeddingError::EmptySets);
    }
    if wa.dim() != wb.dim() {
        return Err(EmbeddingError::ShapeMismatch(format!(
            "feature dims {} and {}",
            wa.dim(),
            wb.dim()
        )));
    }
    let k = wa.dim();
    let mut d_a = EdgeFeatures::zeros(wa.num_nodes(), k);
    let mut d_b = EdgeFeatures::zeros(wb.num_nodes(), k);
    let mut loss = 0.0;
    let mut accumulate = |set: &[EdgePair], hinge: bool| -> Result<(), EmbeddingError> {
        if set.is_empty() {
            return Ok(());
        }
        let scale = 1.0 / set.len() as f64;
        let mut term = 0.0;
        for &((p, q), (u, v)) in set {
            if p.max(q) >= wa.num_nodes() || u.max(v) >= wb.num_nodes() || p == q || u == v {
                return Err(EmbeddingError::ShapeMismatch(format!(
                    "edge pair (({p},{q}),({u},{v})) out of range"
                )));
            }
            let (fa, fb) = (wa.get(p, q), wb.get(u, v));
            let dist = norm_diff(fa, fb);
            // Direction of d(dist)/d(fa); zero where the norm is not differentiable.
            let sign = if hinge {
                if dist < margin {
                    term += margin - dist;
                    -1.0
                } else {
                    0.0
                }
            } else {
                term += dist;
                1.0
            };
            if sign != 0.0 && dist > 0.0 {
                let c = sign * scale / dist;
                let ga = d_a.get_mut(p, q);
                for j in 0..k {
                    ga[j] += c * (fa[j] - fb[j]);
                }
                let gb = d_b.get_mut(u, v);
                for j in 0..k {
                    gb[j] -= c * (fa[j] - fb[j]);
                }
            }
        }
        loss += term * scale;
        Ok(())
    };
    accumulate(matched, false)?;
    accumulate(unmatched, true)?;
    Ok(LossGrad { loss, d_a, d_b })
}

/// Mean matched distance plus mean hinged unmatched distance.
pub fn contrastive_loss(
    wa: &EdgeFeatures,
    wb: &EdgeFeatures,
    pair: &TrainingPair,
    margin: f64,
) -> Result<f64, EmbeddingError> {
    contrastive_with_grad(wa, wb, &pair.matched, &pair.unmatched, margin).map(|lg| lg.loss)
}

fn pair_loss_grad(
    params: &EmbeddingParams,
    pair: &TrainingPair,
    want_grad: bool,
) -> Result<(f64, Vec<f64>), EmbeddingError> {
    let cfg = &params.config;
    for g in [&pair.graph_a, &pair.graph_b] {
        if g.len() < 2 {
            return Err(EmbeddingError::ShapeMismatch("graph with fewer than 2 nodes".into()));
        }
    }
    let ia = GraphInput::new(&pair.graph_a, cfg.profile_len, cfg.distance_scale);
    let ib = GraphInput::new(&pair.graph_b, cfg.profile_len, cfg.distance_scale);
    let fa = forward(params, &ia);
    let fb = forward(params, &ib);
    let wa = to_edge_features(&ia, &fa.out);
    let wb = to_edge_features(&ib, &fb.out);
    let lg = contrastive_with_grad(&wa, &wb, &pair.matched, &pair.unmatched, cfg.margin)?;
    let mut grad = Vec::new();
    if want_grad {
        grad = vec![0.0; params.len()];
        backward(params, &ia, &fa, &fold_edge_gradient(&ia, &lg.d_a), &mut grad);
        backward(params, &ib, &fb, &fold_edge_gradient(&ib, &lg.d_b), &mut grad);
    }
    Ok((lg.loss, grad))
}

/// Mean loss over `batch`.
pub fn batch_loss(params: &EmbeddingParams, batch: &[TrainingPair]) -> Result<f64, EmbeddingError> {
    if batch.is_empty() {
        return Err(EmbeddingError::EmptyCorpus);
    }
    params.validate()?;
    let losses = batch
        .par_iter()
        .map(|p| pair_loss_grad(params, p, false).map(|r| r.0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(losses.iter().sum::<f64>() / batch.len() as f64)
}

/// Mean loss over `batch` and its analytic gradient, flat and shaped like `params.values`.
/// Pair results are reduced in batch order, so the sum is reproducible.
pub fn loss_gradient(params: &EmbeddingParams, batch: &[TrainingPair]) -> Result<(f64, Vec<f64>), EmbeddingError> {
    if batch.is_empty() {
        return Err(EmbeddingError::EmptyCorpus);
    }
    params.validate()?;
    let parts = batch
        .par_iter()
        .map(|p| pair_loss_grad(params, p, true))
        .collect::<Result<Vec<_>, _>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    grad.iter_mut().for_each(|v| *v *= scale);
    Ok((loss * scale, grad))
}
