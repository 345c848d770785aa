use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::irat::irat_update;
use super::loss::pkbce_weights;
use super::state::{init_labels, TrainState};
use super::{EmipldConfig, LossMode, TrainingConfig};
use crate::metrics::auc;
use crate::plin::{Backbone, PatchScorer, TrainBatch};
use crate::preprocess::PatchSet;
use crate::{seed, Error, Raster, Result};

const TAG_MSTEP: u64 = 0x006d_7374_6570;
const TAG_WARM: u64 = 0x7761_726d;
const TAG_VAL: u64 = 0x0076_616c;

/// One weighted training example.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub patch: &'a Raster,
    pub label: u8,
    pub weight: f64,
}

fn cosine_lr(cfg: &TrainingConfig, step: usize, total: usize) -> f64 {
    let floor = cfg.learning_rate * cfg.min_lr_factor;
    let progress = if total <= 1 { 0.0 } else { step as f64 / (total - 1) as f64 };
    floor + 0.5 * (cfg.learning_rate - floor) * (1.0 + libm::cos(PI * progress))
}

fn augment(patch: &Raster, rng: &mut ChaCha8Rng) -> Raster {
    let mut out = if rng.random::<bool>() { patch.flip_horizontal() } else { patch.clone() };
    if rng.random::<bool>() {
        out = out.flip_vertical();
    }
    out
}

/// Shuffled minibatch passes with a fresh optimizer and one cosine learning
/// rate cycle. Returns the mean batch loss of the final epoch.
pub fn train_epochs<B: Backbone>(
    model: &mut B,
    samples: &[Sample<'_>],
    cfg: &TrainingConfig,
    epochs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("no training samples"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    model.reset_optimizer();
    let per_epoch = samples.len().div_ceil(cfg.batch_size);
    let total = per_epoch * epochs;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut step = 0;
    let mut last_epoch_loss = f64::NAN;
    for _ in 0..epochs {
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let patches: Vec<Raster> = chunk
                .iter()
                .map(|&i| if cfg.augment { augment(samples[i].patch, rng) } else { samples[i].patch.clone() })
                .collect();
            let labels: Vec<u8> = chunk.iter().map(|&i| samples[i].label).collect();
            let weights: Vec<f64> = chunk.iter().map(|&i| samples[i].weight).collect();
            let lr = cosine_lr(cfg, step, total);
            loss_sum += model.train_step(TrainBatch { patches: &patches, labels: &labels, weights: &weights }, lr)?;
            step += 1;
        }
        last_epoch_loss = loss_sum / per_epoch as f64;
    }
    Ok(last_epoch_loss)
}

/// Whole-image thumbnails with their image labels.
#[derive(Debug, Clone, Copy)]
pub struct WarmStartData<'a> {
    pub thumbnails: &'a [Raster],
    pub labels: &'a [u8],
}

/// Fine-tunes on thumbnails with plain cross-entropy. With zero epochs the
/// model is untouched and `None` is returned.
pub fn warm_start<B: Backbone>(model: &mut B, data: WarmStartData<'_>, cfg: &TrainingConfig) -> Result<Option<f64>> {
    if data.thumbnails.len() != data.labels.len() {
        return Err(Error::mismatch(data.thumbnails.len(), data.labels.len()));
    }
    if cfg.warm_start_epochs == 0 || data.thumbnails.is_empty() {
        return Ok(None);
    }
    let samples: Vec<Sample<'_>> = data
        .thumbnails
        .iter()
        .zip(data.labels)
        .map(|(patch, &label)| Sample { patch, label, weight: 1.0 })
        .collect();
    let mut rng = seed::rng(cfg.seed, TAG_WARM, 0);
    train_epochs(model, &samples, cfg, cfg.warm_start_epochs, &mut rng).map(Some)
}

/// Outcome of one E-step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EStepSummary {
    pub s: f64,
    pub change_count: usize,
    pub positive_patches: usize,
}

/// Scores every training patch, relabels diseased images against the stored
/// ratio `s_prev`, forces normal images to 0, then commits labels, scores and
/// the new ratio in one step. The ratio is floored at `1 / total_patches`.
pub fn e_step<S: PatchScorer>(
    state: &mut TrainState,
    scorer: &S,
    train: &[PatchSet],
    r: f64,
    irat_enabled: bool,
) -> Result<EStepSummary> {
    if train.len() != state.labels.len() {
        return Err(Error::mismatch(alloc::format!("{} training images", state.labels.len()), train.len()));
    }
    let scores = train.iter().map(|set| scorer.score_patches(&set.patches)).collect::<Result<Vec<_>>>()?;

    let mut labels = Vec::with_capacity(train.len());
    for ((set, g), old) in train.iter().zip(&scores).zip(&state.labels) {
        let new = if set.image_label == 0 {
            vec![0; set.m()]
        } else if irat_enabled {
            irat_update(g, 1, state.s_prev, r)?
        } else {
            old.clone()
        };
        labels.push(new);
    }

    let change_count = state
        .labels
        .iter()
        .flatten()
        .zip(labels.iter().flatten())
        .filter(|(a, b)| a != b)
        .count();
    let total: usize = labels.iter().map(Vec::len).sum();
    let positive_patches = labels.iter().flatten().filter(|&&l| l == 1).count();
    let s = (positive_patches as f64 / total as f64).max(1.0 / total as f64);

    state.labels = labels;
    state.prev_scores = Some(scores);
    state.s_prev = s;
    state.change_count = change_count;
    Ok(EStepSummary { s, change_count, positive_patches })
}

/// Stratified, seeded hold-out: `(train_indices, validation_indices)`, each
/// sorted ascending.
pub fn split_validation(labels: &[u8], fraction: f64, seed_value: u64) -> (Vec<usize>, Vec<usize>) {
    let mut val = Vec::new();
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let mut rng = seed::rng(seed_value, TAG_VAL, u64::from(class));
        idx.shuffle(&mut rng);
        let take = libm::round(fraction * idx.len() as f64) as usize;
        val.extend_from_slice(&idx[..take.min(idx.len())]);
    }
    val.sort_unstable();
    let train = (0..labels.len()).filter(|i| val.binary_search(i).is_err()).collect();
    (train, val)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean batch loss of the M-step's last epoch.
    pub loss: f64,
    pub loss_mode: LossMode,
    /// Diseased-patch ratio after this E-step.
    pub s: f64,
    pub change_count: usize,
    pub positive_patches: usize,
    pub val_auc: Option<f64>,
    pub checkpoint: Option<alloc::string::String>,
}

/// Hooks for persisting a run as it progresses.
pub trait RunObserver<B> {
    fn on_warm_start(&mut self, _model: &B, _loss: Option<f64>) -> Result<()> {
        Ok(())
    }

    fn on_init(&mut self, _state: &TrainState) -> Result<()> {
        Ok(())
    }

    /// Called after each E-step; may fill in `record.checkpoint`.
    fn on_iteration(&mut self, _record: &mut IterationRecord, _state: &TrainState, _model: &B) -> Result<()> {
        Ok(())
    }

    fn on_failure(&mut self, _history: &[IterationRecord], _error: &Error) {}
}

pub struct NoopObserver;

impl<B> RunObserver<B> for NoopObserver {}

#[derive(Debug, Clone)]
pub struct RunOutcome<B> {
    pub model: B,
    pub state: TrainState,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub warm_start_loss: Option<f64>,
}

fn validation_auc<S: PatchScorer>(scorer: &S, val: &[PatchSet]) -> Result<Option<f64>> {
    let labels: Vec<u8> = val.iter().map(|s| s.image_label).collect();
    if !labels.contains(&0) || !labels.contains(&1) {
        return Ok(None);
    }
    let scores = val
        .iter()
        .map(|set| Ok(scorer.score_patches(&set.patches)?.into_iter().fold(0.0, f64::max)))
        .collect::<Result<Vec<_>>>()?;
    auc(&scores, &labels).map(Some)
}

/// Runs warm start (optional) and then alternating M/E steps until the labels
/// stop changing or `max_iterations` is reached.
///
/// The first M-step, and every M-step under [`LossMode::PlainBce`], uses unit
/// weights; later ones weight each patch by `g_prev / s_prev` from the
/// preceding E-step. Training continues from the previous parameters.
pub fn run_emipld<B, O>(
    mut model: B,
    train: &[PatchSet],
    validation: &[PatchSet],
    warm: Option<WarmStartData<'_>>,
    config: &EmipldConfig,
    observer: &mut O,
) -> Result<RunOutcome<B>>
where
    B: Backbone,
    O: RunObserver<B>,
{
    config.validate()?;
    let mut history = Vec::new();
    let result = (|| {
        let mut warm_start_loss = None;
        if config.warm_start {
            if let Some(data) = warm {
                warm_start_loss = warm_start(&mut model, data, &config.training)?;
            }
            observer.on_warm_start(&model, warm_start_loss)?;
        }

        let mut state = init_labels(train, config.s0)?;
        observer.on_init(&state)?;
        let mut converged = false;
        for j in 1..=config.max_iterations {
            let weighted = config.loss_mode == LossMode::Pkbce && state.prev_scores.is_some();
            let weights: Vec<f64> = match &state.prev_scores {
                Some(prev) if weighted => pkbce_weights(&prev.concat(), state.s_prev)?,
                _ => vec![1.0; state.total_patches()],
            };
            let mut samples = Vec::with_capacity(weights.len());
            for (set, labels) in train.iter().zip(&state.labels) {
                for (patch, &label) in set.patches.iter().zip(labels) {
                    samples.push(Sample { patch, label, weight: weights[samples.len()] });
                }
            }
            let mut rng = seed::rng(config.training.seed, TAG_MSTEP, j as u64);
            let loss = train_epochs(&mut model, &samples, &config.training, config.training.epochs_per_mstep, &mut rng)?;

            let summary = e_step(&mut state, &model, train, config.r, config.irat_enabled)?;
            state.iteration = j;
            state.check_invariants()?;

            let mut record = IterationRecord {
                iteration: j,
                loss,
                loss_mode: if weighted { LossMode::Pkbce } else { LossMode::PlainBce },
                s: summary.s,
                change_count: summary.change_count,
                positive_patches: summary.positive_patches,
                val_auc: validation_auc(&model, validation)?,
                checkpoint: None,
            };
            observer.on_iteration(&mut record, &state, &model)?;
            state.checkpoint = record.checkpoint.clone();
            history.push(record);
            if config.convergence.is_converged(summary.change_count, state.total_patches()) {
                converged = true;
                break;
            }
        }
        Ok((state, converged, warm_start_loss))
    })();

    match result {
        Ok((state, converged, warm_start_loss)) => Ok(RunOutcome { model, state, history, converged, warm_start_loss }),
        Err(e) => {
            observer.on_failure(&history, &e);
            Err(e)
        }
    }
}
