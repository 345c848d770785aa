//! EM-style patch label distillation.
//!
//! Patch labels start as the image label. Each iteration trains the scorer on
//! the current labels (M-step), then rescores every training patch and
//! relabels the patches of diseased images with the rank-aware threshold
//! (E-step). Normal-image patches are 0 at every iteration. The loop stops
//! when no label changes or the iteration cap is hit.

pub mod irat;
pub mod loss;
mod run;
mod state;

pub use irat::{irat_update, top_k};
pub use loss::{bce_loss, pkbce_grad, pkbce_loss, pkbce_weights, weighted_bce};
pub use run::{
    e_step, run_emipld, split_validation, train_epochs, warm_start, EStepSummary, IterationRecord, NoopObserver,
    RunObserver, RunOutcome, Sample, WarmStartData,
};
pub use state::{init_labels, TrainState};

use alloc::format;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LossMode {
    /// Weighted by previous confidences from the second M-step on.
    Pkbce,
    PlainBce,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Convergence {
    /// Stop only when no patch label changed.
    ExactZero,
    /// Stop when at most this fraction of all training patches changed.
    MinChangeFraction(f64),
}

impl Convergence {
    pub fn is_converged(&self, change_count: usize, total_patches: usize) -> bool {
        match *self {
            Convergence::ExactZero => change_count == 0,
            Convergence::MinChangeFraction(eps) => change_count as f64 <= eps * total_patches as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainingConfig {
    pub learning_rate: f64,
    /// Cosine decay floor as a fraction of `learning_rate`.
    pub min_lr_factor: f64,
    pub batch_size: usize,
    pub epochs_per_mstep: usize,
    pub warm_start_epochs: usize,
    /// Random horizontal/vertical flips of training patches.
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-3,
            min_lr_factor: 0.05,
            batch_size: 32,
            epochs_per_mstep: 2,
            warm_start_epochs: 20,
            augment: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EmipldConfig {
    /// Per-image rank quota fraction.
    pub r: f64,
    /// Initial diseased-patch ratio.
    pub s0: f64,
    pub max_iterations: usize,
    pub warm_start: bool,
    pub loss_mode: LossMode,
    /// When off, labels stay at their initial broadcast values.
    pub irat_enabled: bool,
    pub convergence: Convergence,
    /// Fraction of training images held out for per-iteration validation AUC.
    pub validation_fraction: f64,
    pub training: TrainingConfig,
}

impl Default for EmipldConfig {
    fn default() -> Self {
        EmipldConfig {
            r: 0.45,
            s0: 0.5,
            max_iterations: 10,
            warm_start: true,
            loss_mode: LossMode::Pkbce,
            irat_enabled: true,
            convergence: Convergence::ExactZero,
            validation_fraction: 0.1,
            training: TrainingConfig::default(),
        }
    }
}

impl EmipldConfig {
    /// Every violated constraint, one message each.
    pub fn problems(&self) -> alloc::vec::Vec<alloc::string::String> {
        let mut out = alloc::vec::Vec::new();
        if !(self.r > 0.0 && self.r <= 1.0) {
            out.push(format!("emipld.r must lie in (0,1], got {}", self.r));
        }
        if !(self.s0 > 0.0 && self.s0 <= 1.0) {
            out.push(format!("emipld.s0 must lie in (0,1], got {}", self.s0));
        }
        if self.max_iterations == 0 {
            out.push("emipld.max_iterations must be >= 1".into());
        }
        if let Convergence::MinChangeFraction(eps) = self.convergence {
            if !(0.0..1.0).contains(&eps) {
                out.push(format!("emipld.convergence.min_change_fraction must lie in [0,1), got {eps}"));
            }
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            out.push(format!("emipld.validation_fraction must lie in [0,1), got {}", self.validation_fraction));
        }
        let t = &self.training;
        if !(t.learning_rate >= 0.0) || !t.learning_rate.is_finite() {
            out.push(format!("emipld.training.learning_rate must be >= 0, got {}", t.learning_rate));
        }
        if !(0.0..=1.0).contains(&t.min_lr_factor) {
            out.push(format!("emipld.training.min_lr_factor must lie in [0,1], got {}", t.min_lr_factor));
        }
        if t.batch_size == 0 {
            out.push("emipld.training.batch_size must be >= 1".into());
        }
        if t.epochs_per_mstep == 0 {
            out.push("emipld.training.epochs_per_mstep must be >= 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}
