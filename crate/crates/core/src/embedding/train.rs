use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{batch_loss, loss_gradient, TrainingPair};
use super::network::embed_edges;
use super::{EmbeddingError, EmbeddingParams};
use crate::sim::{generate_scenario, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Seed for per-epoch shuffling.
    pub seed: u64,
    /// Number of pairs in a generated corpus.
    pub corpus_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 20,
            epochs: 200,
            seed: 0,
            corpus_size: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean corpus loss before the first update.
    pub initial_loss: f64,
    /// Mean of the batch losses seen during each epoch.
    pub epoch_losses: Vec<f64>,
    /// Mean corpus loss after the last update.
    pub final_loss: f64,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mean_loss\n");
        s.push_str(&format!("0,{}\n", self.initial_loss));
        for (i, l) in self.epoch_losses.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, l));
        }
        s
    }
}

/// Mini-batch gradient descent with momentum. Deterministic in `cfg.seed`.
pub fn train(
    corpus: &[TrainingPair],
    init: EmbeddingParams,
    cfg: &TrainConfig,
) -> Result<(EmbeddingParams, TrainReport), EmbeddingError> {
    if corpus.is_empty() {
        return Err(EmbeddingError::EmptyCorpus);
    }
    init.validate()?;
    let initial_loss = batch_loss(&init, corpus)?;
    if !initial_loss.is_finite() {
        return Err(EmbeddingError::DivergenceDetected { epoch: 0 });
    }
    let mut params = init;
    let mut velocity = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let batch_size = cfg.batch_size.max(1);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<TrainingPair> = chunk.iter().map(|&i| corpus[i].clone()).collect();
            let (loss, grad) = loss_gradient(&params, &batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(EmbeddingError::DivergenceDetected { epoch: epoch + 1 });
            }
            total += loss;
            batches += 1;
            for ((p, v), g) in params.values.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *p += *v;
            }
        }
        epoch_losses.push(total / batches as f64);
    }
    let final_loss = if cfg.epochs == 0 {
        initial_loss
    } else {
        batch_loss(&params, corpus)?
    };
    if !final_loss.is_finite() {
        return Err(EmbeddingError::DivergenceDetected { epoch: cfg.epochs });
    }
    Ok((
        params,
        TrainReport {
            initial_loss,
            epoch_losses,
            final_loss,
        },
    ))
}

/// Builds `count` training pairs from single-frame simulator scenes, pairing
/// agent 0 and agent 1 at the same instant. Scenes with fewer than two
/// shared objects are skipped.
pub fn generate_corpus(scene: &ScenarioConfig, count: usize, seed: u64) -> Result<Vec<TrainingPair>, EmbeddingError> {
    let mut out = Vec::with_capacity(count);
    let mut attempt = 0u64;
    while out.len() < count {
        if attempt > 100 * count as u64 + 1000 {
            return Err(EmbeddingError::EmptyCorpus);
        }
        let cfg = ScenarioConfig {
            seed: seed.wrapping_mul(1_000_003).wrapping_add(attempt),
            duration: 1,
            num_agents: 2,
            ..scene.clone()
        };
        attempt += 1;
        let s = generate_scenario(&cfg).map_err(|e| EmbeddingError::Corpus(e.to_string()))?;
        let (fa, fb) = (&s.streams[0][0], &s.streams[1][0]);
        if fa.boxes.is_empty() || fb.boxes.is_empty() {
            continue;
        }
        if let Some(pair) =
            TrainingPair::from_frames(fa, fb, cfg.seed).map_err(|e| EmbeddingError::Corpus(e.to_string()))?
        {
            out.push(pair);
        }
    }
    Ok(out)
}

/// Scene parameters for training corpora: small views keep graphs around ten nodes.
pub fn default_corpus_scene() -> ScenarioConfig {
    ScenarioConfig {
        fov_radius: 30.0,
        num_objects: 60,
        world_extent: 160.0,
        ..ScenarioConfig::default()
    }
}

/// Feature-space distances of matched and unmatched edge pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSeparation {
    pub matched: Vec<f64>,
    pub unmatched: Vec<f64>,
}

impl EdgeSeparation {
    pub fn mean_matched(&self) -> f64 {
        mean(&self.matched)
    }
    pub fn mean_unmatched(&self) -> f64 {
        mean(&self.unmatched)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Distances for every matched edge pair and for every non-matching
/// cross-graph edge pair of `pairs`.
pub fn edge_separation(
    params: Option<&EmbeddingParams>,
    pairs: &[TrainingPair],
) -> Result<EdgeSeparation, EmbeddingError> {
    let mut matched = Vec::new();
    let mut unmatched = Vec::new();
    for pair in pairs {
        let (wa, wb) = match params {
            Some(p) => (embed_edges(p, &pair.graph_a)?, embed_edges(p, &pair.graph_b)?),
            None => (pair.graph_a.features().clone(), pair.graph_b.features().clone()),
        };
        let dist = |(p, q): (usize, usize), (u, v): (usize, usize)| {
            wa.get(p, q)
                .iter()
                .zip(wb.get(u, v))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let mut is_matched = std::collections::HashSet::new();
        for &(a, b) in &pair.matched {
            matched.push(dist(a, b));
            is_matched.insert((a, (b.0.min(b.1), b.0.max(b.1))));
        }
        let (na, nb) = (pair.graph_a.len(), pair.graph_b.len());
        for p in 0..na {
            for q in p + 1..na {
                for u in 0..nb {
                    for v in u + 1..nb {
                        if !is_matched.contains(&((p, q), (u, v))) {
                            unmatched.push(dist((p, q), (u, v)));
                        }
                    }
                }
            }
        }
    }
    Ok(EdgeSeparation { matched, unmatched })
}

/// Threshold maximizing F1 of "distance below threshold" as a match classifier.
pub fn calibrate_threshold(sep: &EdgeSeparation) -> Option<f64> {
    if sep.matched.is_empty() {
        return None;
    }
    let mut scored: Vec<(f64, bool)> = sep
        .matched
        .iter()
        .map(|&d| (d, true))
        .chain(sep.unmatched.iter().map(|&d| (d, false)))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let positives = sep.matched.len() as f64;
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..scored.len() {
        if scored[i].1 {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        // Only cut between distinct distances.
        if i + 1 < scored.len() && scored[i + 1].0 == scored[i].0 {
            continue;
        }
        let f1 = 2.0 * tp / (2.0 * tp + fp + (positives - tp));
        if f1 > best.0 {
            let next = scored.get(i + 1).map_or(scored[i].0 * 1.01 + 1e-12, |s| s.0);
            best = (f1, 0.5 * (scored[i].0 + next));
        }
    }
    Some(best.1)
}
