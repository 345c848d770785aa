//! Patch scorer: maps one square patch to a disease confidence in (0, 1).
//!
//! [`PatchScorer`] and [`Backbone`] are the adapter contract; any trainable
//! network that implements them can drive the distillation loop. [`SmallCnn`]
//! is the built-in implementation sized for desk-scale 64x64 patches.

mod checkpoint;
mod cnn;
mod gemm;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use cnn::{SmallCnn, SmallCnnConfig};

use alloc::string::String;
use alloc::vec::Vec;

use crate::{Raster, Result};

/// Scores are clamped into `[SCORE_EPS, 1 - SCORE_EPS]` so they stay strictly
/// inside (0, 1) even when the logits saturate.
pub const SCORE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BackboneKind {
    BuiltinSmallCnn,
    ExternalAdapter,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BackboneSpec {
    pub kind: BackboneKind,
    /// Square input side in pixels.
    pub input_size: usize,
    pub description: String,
    pub pretrained: bool,
}

/// Evaluation-mode scoring. Implementations must be pure functions of
/// (state, patch): no cross-patch coupling inside a batch.
pub trait PatchScorer {
    fn input_size(&self) -> usize;

    /// One confidence per patch, order-preserving, each strictly in (0, 1).
    fn score_patches(&self, patches: &[Raster]) -> Result<Vec<f64>>;
}

/// A weighted binary batch for one optimizer step.
#[derive(Debug, Clone, Copy)]
pub struct TrainBatch<'a> {
    pub patches: &'a [Raster],
    pub labels: &'a [u8],
    pub weights: &'a [f64],
}

/// A trainable scorer.
pub trait Backbone: PatchScorer {
    fn spec(&self) -> BackboneSpec;

    /// One gradient step on the weighted cross-entropy
    /// `-(1/N) sum w [l log g + (1 - l) log(1 - g)]`; returns that loss as it
    /// was before the update.
    fn train_step(&mut self, batch: TrainBatch<'_>, learning_rate: f64) -> Result<f64>;

    /// Drops optimizer moments at the start of a training phase.
    fn reset_optimizer(&mut self) {}
}

impl<T: PatchScorer + ?Sized> PatchScorer for &T {
    fn input_size(&self) -> usize {
        (**self).input_size()
    }

    fn score_patches(&self, patches: &[Raster]) -> Result<Vec<f64>> {
        (**self).score_patches(patches)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OptimizerKind {
    /// Adaptive moments (momentum plus per-parameter scaling).
    Adam,
    SgdMomentum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub momentum: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; 0 disables it.
    pub max_grad_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { kind: OptimizerKind::Adam, momentum: 0.9, beta2: 0.999, eps: 1e-8, max_grad_norm: 5.0 }
    }
}
