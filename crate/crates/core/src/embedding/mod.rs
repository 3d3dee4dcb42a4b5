//! Learned edge features: a small attention-based graph network over the
//! salient-object graph, trained with a margin contrastive loss so that edges
//! of the same object pair look alike across agents.

mod loss;
mod network;
mod params;
mod train;

pub use loss::{batch_loss, contrastive_loss, loss_gradient, EdgePair, TrainingPair};
pub use network::embed_edges;
pub use params::{EmbeddingConfig, EmbeddingParams, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use train::{
    calibrate_threshold, default_corpus_scene, edge_separation, generate_corpus, train, EdgeSeparation, TrainConfig,
    TrainReport,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("both matched and unmatched edge sets are empty")]
    EmptySets,
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("loss became non-finite at epoch {epoch}")]
    DivergenceDetected { epoch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("corpus generation: {0}")]
    Corpus(String),
}
