use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::EmbeddingError;

/// Architecture and loss hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// Hidden width for node and edge states.
    pub hidden: usize,
    /// Rounds of attention message passing.
    pub rounds: usize,
    /// Output edge feature dimension.
    pub out_dim: usize,
    /// Length of the resampled sorted-distance profile used as node input.
    pub profile_len: usize,
    /// Distances are divided by this before entering the network, meters.
    pub distance_scale: f64,
    /// Hinge margin of the contrastive loss.
    pub margin: f64,
    pub leaky_slope: f64,
    pub init_seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            rounds: 2,
            out_dim: 8,
            profile_len: 16,
            distance_scale: 10.0,
            margin: 1.0,
            leaky_slope: 0.2,
            init_seed: 0,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.hidden == 0 || self.out_dim == 0 || self.profile_len < 2 {
            return Err(EmbeddingError::ShapeMismatch(
                "hidden and out_dim must be positive, profile_len at least 2".into(),
            ));
        }
        if !(self.distance_scale > 0.0 && self.margin > 0.0 && self.leaky_slope.is_finite()) {
            return Err(EmbeddingError::ShapeMismatch(
                "distance_scale and margin must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Block {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn mat<'a>(&self, v: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &v[self.offset..self.offset + self.len()]).expect("block shape")
    }

    pub fn mat_mut<'a>(&self, v: &'a mut [f64]) -> ArrayViewMut2<'a, f64> {
        ArrayViewMut2::from_shape((self.rows, self.cols), &mut v[self.offset..self.offset + self.len()])
            .expect("block shape")
    }

    pub fn vec<'a>(&self, v: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&v[self.offset..self.offset + self.len()])
    }

    pub fn vec_mut<'a>(&self, v: &'a mut [f64]) -> ArrayViewMut1<'a, f64> {
        ArrayViewMut1::from(&mut v[self.offset..self.offset + self.len()])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RoundLayout {
    pub msg_node: Block,
    pub msg_edge: Block,
    pub msg_bias: Block,
    pub att_self: Block,
    pub att_nbr: Block,
    pub att_edge: Block,
    pub edge_self: Block,
    pub edge_nodes: Block,
    pub edge_bias: Block,
}

/// Offsets of every weight block inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub node_enc_w: Block,
    pub node_enc_b: Block,
    pub edge_enc_w: Block,
    pub edge_enc_b: Block,
    pub rounds: Vec<RoundLayout>,
    pub out_w: Block,
    pub out_skip: Block,
    pub out_b: Block,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &EmbeddingConfig) -> Self {
        let h = cfg.hidden;
        let mut offset = 0;
        let mut block = |rows: usize, cols: usize| {
            let b = Block { offset, rows, cols };
            offset += rows * cols;
            b
        };
        let node_enc_w = block(cfg.profile_len, h);
        let node_enc_b = block(1, h);
        let edge_enc_w = block(1, h);
        let edge_enc_b = block(1, h);
        let rounds = (0..cfg.rounds)
            .map(|_| RoundLayout {
                msg_node: block(h, h),
                msg_edge: block(h, h),
                msg_bias: block(1, h),
                att_self: block(1, h),
                att_nbr: block(1, h),
                att_edge: block(1, h),
                edge_self: block(h, h),
                edge_nodes: block(h, h),
                edge_bias: block(1, h),
            })
            .collect();
        let out_w = block(h, cfg.out_dim);
        let out_skip = block(1, cfg.out_dim);
        let out_b = block(1, cfg.out_dim);
        Layout {
            node_enc_w,
            node_enc_b,
            edge_enc_w,
            edge_enc_b,
            rounds,
            out_w,
            out_skip,
            out_b,
            total: offset,
        }
    }
}

pub const CHECKPOINT_FORMAT: &str = "graphalign-edge-embedding";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Weights of the edge embedding network plus the hyperparameters that shape them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub config: EmbeddingConfig,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    #[serde(flatten)]
    params: EmbeddingParams,
}

impl EmbeddingParams {
    /// He-style random initialization, seeded by `config.init_seed`.
    pub fn init(config: EmbeddingConfig) -> Result<Self, EmbeddingError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut values = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut fill = |b: &Block, std: f64, values: &mut [f64]| {
            let d = Normal::new(0.0, std).expect("positive std");
            for v in &mut values[b.offset..b.offset + b.len()] {
                *v = d.sample(&mut rng);
            }
        };
        let h = config.hidden as f64;
        fill(
            &layout.node_enc_w,
            (2.0 / config.profile_len as f64).sqrt(),
            &mut values,
        );
        fill(&layout.edge_enc_w, 2.0_f64.sqrt(), &mut values);
        for r in &layout.rounds {
            fill(&r.msg_node, (1.0 / h).sqrt(), &mut values);
            fill(&r.msg_edge, (1.0 / h).sqrt(), &mut values);
            fill(&r.att_self, 0.1 / h.sqrt(), &mut values);
            fill(&r.att_nbr, 0.1 / h.sqrt(), &mut values);
            fill(&r.att_edge, 0.1 / h.sqrt(), &mut values);
            fill(&r.edge_self, (1.0 / h).sqrt(), &mut values);
            fill(&r.edge_nodes, (1.0 / h).sqrt(), &mut values);
        }
        fill(&layout.out_w, (1.0 / h).sqrt(), &mut values);
        fill(&layout.out_skip, 1.0, &mut values);
        Ok(Self { config, values })
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        self.config.validate()?;
        let expected = Layout::new(&self.config).total;
        if self.values.len() != expected {
            return Err(EmbeddingError::ShapeMismatch(format!(
                "expected {expected} parameters, found {}",
                self.values.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::ShapeMismatch("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            params: self.clone(),
        })
        .expect("params serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, EmbeddingError> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| EmbeddingError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(EmbeddingError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        ck.params.validate()?;
        Ok(ck.params)
    }

    pub fn save(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, EmbeddingError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EmbeddingError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
