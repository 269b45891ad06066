//! Small layout-aware transformer encoder with hand-written backprop.
//!
//! Token embeddings are summed with a 1D position table and four coordinate
//! tables (x1, y1, x2, y2, 1001 rows each; the masked box sentinel 1000 is
//! just the last row). Pre-norm encoder layers feed four linear + softmax
//! heads: BIESO tags, numeric ordering, layout inclusion and MVLM.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pretrain::PretrainTask;

mod checkpoint;
mod forward;
mod infer;
pub(crate) mod ops;
mod optim;
mod params;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use forward::{ForwardOutput, TaggerModel, TrainExample};
pub use infer::{extract_fields, predict_windows};
pub use optim::{lr_at, Adam};
pub use params::{Layer, Params, Tensor, HEAD_INIT_STD, INIT_STD};
pub use train::{finetune, finetune_examples, finetune_with_hook, pretrain, write_log_csv, LogRow, TrainConfig};

/// Rows of each coordinate embedding table (coordinates 0..=1000).
pub const COORD_BUCKETS: usize = 1001;

/// Floating point type the model is generic over (`f32` or `f64`).
pub trait Scalar: Float + FromPrimitive + Sum + Send + Sync + Debug + Default + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Head {
    Tag,
    NumericOrdering,
    LayoutInclusion,
    Mvlm,
}

impl Head {
    pub fn classes(self, cfg: &ModelConfig) -> usize {
        match self {
            Head::Tag => cfg.num_tags,
            Head::NumericOrdering => 3,
            Head::LayoutInclusion => 2,
            Head::Mvlm => cfg.vocab_size,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Head::Tag => "tag",
            Head::NumericOrdering => "no",
            Head::LayoutInclusion => "li",
            Head::Mvlm => "mvlm",
        }
    }
}

impl From<PretrainTask> for Head {
    fn from(t: PretrainTask) -> Self {
        match t {
            PretrainTask::Mvlm => Head::Mvlm,
            PretrainTask::NumericOrdering => Head::NumericOrdering,
            PretrainTask::LayoutInclusion => Head::LayoutInclusion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    /// Size of the tag head, `4K + 1` for `K` fields.
    pub num_tags: usize,
    pub dropout: f64,
    /// Keys with this id are masked out of attention.
    pub pad_id: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: crate::tokenizer::DEFAULT_VOCAB_SIZE,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 256,
            max_len: crate::tokenizer::DEFAULT_MAX_LEN,
            num_tags: 13,
            dropout: 0.1,
            pad_id: 0,
        }
    }
}

impl ModelConfig {
    pub fn new(vocab_size: usize, num_tags: usize) -> Self {
        ModelConfig {
            vocab_size,
            num_tags,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("max_len", self.max_len),
            ("num_tags", self.num_tags),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Validation(format!("model dimension {name} must be at least 1")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Validation(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Validation(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.pad_id as usize >= self.vocab_size {
            return Err(Error::Validation("pad id outside the vocabulary".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
