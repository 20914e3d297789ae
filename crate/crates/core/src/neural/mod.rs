//! Compound-word Transformer with causal linear attention, trained by hand-written backprop.

pub mod attention;
pub mod checkpoint;
pub mod model;
pub mod ops;
pub mod optim;
pub mod params;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::{Family, Task, Vocabulary};

pub use attention::{causal_linear_attention, quadratic_linear_attention, AttnState};
pub use model::{Forward, Model, StepState, WordIds};
pub use params::{ModelParams, Tensor};

/// Float type the model can run in: f32 for training, f64 for oracle checks.
pub trait Scalar:
    num_traits::Float + num_traits::FromPrimitive + std::iter::Sum + Default + Send + Sync + std::fmt::Debug + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("sequence of {len} words exceeds the window of {max}")]
    TooLong { len: usize, max: usize },
    #[error("bad config: {0}")]
    Config(String),
    #[error("word {index}: {reason}")]
    Word { index: usize, reason: String },
    #[error("non-finite loss at step {step} (head {head})")]
    NonFinite { step: u64, head: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("vocabulary hash mismatch: checkpoint {found}, expected {expected}")]
    VocabMismatch { found: String, expected: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMap {
    /// elu(u) + 1
    #[default]
    EluPlusOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub task: Task,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    /// Embedding width per modelled type, in column order.
    pub embed_dims: Vec<usize>,
    pub family_dim: usize,
    /// Attention window: the longest input sequence.
    pub max_len: usize,
    #[serde(default)]
    pub feature_map: FeatureMap,
    pub seed: u64,
}

impl ModelConfig {
    /// 12 layers, 8 heads, width 512, FFN 2048, full-size embeddings.
    pub fn paper(vocab: &Vocabulary) -> Self {
        let (embed_dims, family_dim) = vocab.scaled_embed_dims(1.0);
        ModelConfig {
            task: vocab.task,
            d_model: 512,
            layers: 12,
            heads: 8,
            ffn: 2048,
            embed_dims,
            family_dim,
            max_len: 5120,
            feature_map: FeatureMap::EluPlusOne,
            seed: 0,
        }
    }

    /// 2 layers, 2 heads, width 64; embeddings shrunk by the same 1/8.
    pub fn toy(vocab: &Vocabulary) -> Self {
        let (embed_dims, family_dim) = vocab.scaled_embed_dims(64.0 / 512.0);
        ModelConfig {
            task: vocab.task,
            d_model: 64,
            layers: 2,
            heads: 2,
            ffn: 256,
            embed_dims,
            family_dim,
            max_len: 512,
            feature_map: FeatureMap::EluPlusOne,
            seed: 0,
        }
    }

    pub fn preset(name: &str, vocab: &Vocabulary) -> Option<Self> {
        match name {
            "paper" => Some(Self::paper(vocab)),
            "toy" => Some(Self::toy(vocab)),
            _ => None,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads.max(1)
    }

    /// Concatenated embedding width fed to the input projection.
    pub fn concat_dim(&self) -> usize {
        self.embed_dims.iter().sum::<usize>() + self.family_dim
    }

    /// Rows of the family embedding table: the four families plus the start word.
    pub fn family_rows(&self) -> usize {
        Family::BOS_ROW + 1
    }

    pub fn validate(&self, vocab: &Vocabulary) -> Result<(), NeuralError> {
        let fail = |m: &str| Err(NeuralError::Config(m.to_string()));
        if self.task != vocab.task {
            return fail("task differs from the vocabulary");
        }
        if self.embed_dims.len() != vocab.k() {
            return fail("one embedding width per token type is required");
        }
        if self.d_model == 0 || self.layers == 0 || self.heads == 0 || self.ffn == 0 || self.max_len == 0 {
            return fail("sizes must be positive");
        }
        if self.d_model % self.heads != 0 {
            return fail("model width must be divisible by the head count");
        }
        if self.embed_dims.iter().any(|&d| d == 0) || self.family_dim == 0 {
            return fail("embedding widths must be positive");
        }
        Ok(())
    }

    /// Parameter count implied by the shapes, without allocating.
    pub fn parameter_count(&self, vocab: &Vocabulary) -> usize {
        let d = self.d_model;
        let emb: usize = vocab
            .types()
            .iter()
            .zip(&self.embed_dims)
            .map(|(&t, &w)| vocab.info(t).classes() * w)
            .sum::<usize>()
            + self.family_rows() * self.family_dim;
        let input = self.concat_dim() * d + d + self.max_len * d;
        let layer = 4 * (d * d + d) + 2 * d * self.ffn + self.ffn + d + 4 * d;
        let heads: usize = Family::ALL.len() * (d + 1)
            + (d + self.family_dim) * d
            + d
            + vocab.types().iter().map(|&t| vocab.info(t).classes() * (d + 1)).sum::<usize>();
        emb + input + self.layers * layer + 2 * d + heads
    }

    /// Rough f32 training footprint in bytes for one sequence of `len` words:
    /// parameters, gradients, two Adam moments, plus cached activations.
    pub fn memory_estimate(&self, vocab: &Vocabulary, len: usize) -> usize {
        let params = self.parameter_count(vocab);
        let d = self.d_model;
        let per_layer = len * (12 * d + 2 * self.ffn);
        let heads: usize = len * (d + self.family_dim + d + vocab.types().iter().map(|&t| vocab.info(t).classes()).sum::<usize>());
        4 * (4 * params + self.layers * per_layer + len * (self.concat_dim() + 2 * d) + heads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_widths() {
        let v = Vocabulary::new(Task::Conditional);
        let c = ModelConfig::paper(&v);
        assert_eq!(c.concat_dim(), 1251);
        assert_eq!((c.layers, c.heads, c.d_model, c.ffn), (12, 8, 512, 2048));
        c.validate(&v).unwrap();
    }

    #[test]
    fn toy_is_small() {
        for task in [Task::Conditional, Task::Unconditional] {
            let v = Vocabulary::new(task);
            let c = ModelConfig::toy(&v);
            c.validate(&v).unwrap();
            assert!(c.parameter_count(&v) <= 500_000);
        }
    }
}
