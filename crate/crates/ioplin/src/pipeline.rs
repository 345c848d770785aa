//! End-to-end steps shared by the commands and the acceptance suite.

use std::path::Path;

use ioplin_core::corpus::{corrupt_raster, generate_corpus, oracle_patch_labels, ImageRecord, Split};
use ioplin_core::detect::{screen_scores, ScreeningEntry, ScreeningReport};
use ioplin_core::emipld::{run_emipld, split_validation, warm_start, LossMode, RunOutcome, WarmStartData};
use ioplin_core::metrics::{auc, evaluate, noise_seed, EvalReport};
use ioplin_core::plin::{PatchScorer, SmallCnn};
use ioplin_core::preprocess::{make_thumbnail, partition, EqualizeMode, PatchGrid, PatchSet};
use ioplin_core::Raster;

use crate::cache::PreprocessCache;
use crate::config::RunConfig;
use crate::manifest::{load_corpus, load_manifest, write_corpus, CorpusManifest, LoadedCorpus};
use crate::store::{FsObserver, RunDir, RunManifest, RunStatus};
use crate::{Error, Result};

/// Generates the configured synthetic corpus into `dir`.
pub fn generate(config: &RunConfig, dir: &Path) -> Result<CorpusManifest> {
    let corpus = generate_corpus(&config.corpus.generate)?;
    log::info!("generated {} images into {}", corpus.records.len(), dir.display());
    write_corpus(dir, &corpus)
}

/// Loads the configured corpus. A missing synthetic corpus (no explicit
/// manifest configured) is generated first.
pub fn load_or_generate(config: &RunConfig) -> Result<LoadedCorpus> {
    let path = config.corpus.manifest_path();
    let manifest = if path.is_file() {
        load_manifest(&path)?
    } else if config.corpus.manifest.is_some() {
        return Err(Error::Data(format!("manifest {} not found", path.display())));
    } else {
        generate(config, &config.corpus.dir)?
    };
    let crop = config.corpus.resize_to_tile.then_some(config.backbone.input_size);
    load_corpus(&manifest, crop)
}

/// One split, equalized and cut into patches, with thumbnails.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub records: Vec<ImageRecord>,
    pub sets: Vec<PatchSet>,
    pub thumbnails: Vec<Raster>,
    /// Hidden per-patch labels, when the corpus carries masks.
    pub oracle: Option<Vec<Vec<u8>>>,
}

impl SplitData {
    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    fn subset(&self, idx: &[usize]) -> SplitData {
        SplitData {
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
            sets: idx.iter().map(|&i| self.sets[i].clone()).collect(),
            thumbnails: idx.iter().map(|&i| self.thumbnails[i].clone()).collect(),
            oracle: self.oracle.as_ref().map(|o| idx.iter().map(|&i| o[i].clone()).collect()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub corpus_hash: String,
    pub train: SplitData,
    pub validation: SplitData,
    pub test: SplitData,
}

fn prepare_split(
    config: &RunConfig,
    corpus: &LoadedCorpus,
    cache: &PreprocessCache,
    split: Split,
) -> Result<SplitData> {
    let size = config.backbone.input_size;
    let mut data = SplitData { records: Vec::new(), sets: Vec::new(), thumbnails: Vec::new(), oracle: None };
    let mut oracle = Vec::new();
    for (i, rec) in corpus.split(split) {
        let source = corpus.manifest.image_path(&corpus.manifest.records[i]);
        let eq = cache.equalize(&rec.pixels, Some(&source))?;
        let set = PatchSet::from_image(&rec.id, rec.label, &eq, size)
            .map_err(|e| Error::Data(format!("image {}: {e}", rec.id)))?;
        if let Some(masks) = &corpus.masks {
            let min_pixels = corpus.manifest.spec.as_ref().map_or(config.corpus.generate.min_defect_pixels, |s| s.min_defect_pixels);
            oracle.push(oracle_patch_labels(&masks[i], &set.grid, min_pixels)?);
        }
        data.thumbnails.push(make_thumbnail(&eq, config.preprocess.thumbnail_size)?);
        data.sets.push(set);
        data.records.push(rec.clone());
    }
    data.oracle = corpus.masks.as_ref().map(|_| oracle);
    Ok(data)
}

/// Equalizes, partitions and splits the corpus; a stratified slice of the
/// training split is held out for per-iteration validation.
pub fn prepare(config: &RunConfig, corpus: &LoadedCorpus) -> Result<Prepared> {
    let crop = config.corpus.resize_to_tile.then_some(config.backbone.input_size);
    let cache = PreprocessCache::new(&config.preprocess, crop, config.output.cache_preprocessed);
    let train_all = prepare_split(config, corpus, &cache, Split::Train)?;
    let test = prepare_split(config, corpus, &cache, Split::Test)?;
    let (fit, val) =
        split_validation(&train_all.labels(), config.emipld.validation_fraction, config.emipld.training.seed);
    Ok(Prepared {
        corpus_hash: corpus.hash.clone(),
        train: train_all.subset(&fit),
        validation: train_all.subset(&val),
        test,
    })
}

#[derive(Debug)]
pub struct TrainResult {
    pub outcome: RunOutcome<SmallCnn>,
    pub run_dir: RunDir,
    pub manifest: RunManifest,
}

/// Runs warm start and the distillation loop, persisting everything under
/// `<runs_dir>/<run_id>`.
pub fn train(config: &RunConfig, data: &Prepared, runs_dir: &Path) -> Result<TrainResult> {
    let run_id = config.run_id();
    let dir = RunDir::create(runs_dir, &run_id)?;
    let manifest = RunManifest {
        run_id,
        status: RunStatus::Running,
        config: config.clone(),
        corpus_hash: data.corpus_hash.clone(),
        train_images: data.train.records.len(),
        validation_images: data.validation.records.len(),
        warm_start_loss: None,
        warm_checkpoint: None,
        iterations: Vec::new(),
        converged: None,
        final_checkpoint: None,
        error: None,
    };
    dir.write_manifest(&manifest)?;
    let mut observer = FsObserver { dir, manifest };

    let model = SmallCnn::new(config.backbone.clone())?;
    let labels = data.train.labels();
    let warm = WarmStartData { thumbnails: &data.train.thumbnails, labels: &labels };
    let outcome = run_emipld(model, &data.train.sets, &data.validation.sets, Some(warm), &config.emipld, &mut observer)
        .map_err(|e| match e {
            ioplin_core::Error::Checkpoint(_) => Error::Core(e),
            e => Error::Training(e),
        })?;

    let FsObserver { dir, mut manifest } = observer;
    manifest.status = RunStatus::Completed;
    manifest.converged = Some(outcome.converged);
    manifest.final_checkpoint = outcome.history.last().and_then(|r| r.checkpoint.clone());
    dir.write_manifest(&manifest)?;
    Ok(TrainResult { outcome, run_dir: dir, manifest })
}

/// The whole-image baseline: a fresh scorer trained on thumbnails only, which
/// is also what the warm start produces.
pub fn train_thumbnail_model(config: &RunConfig, data: &Prepared) -> Result<SmallCnn> {
    let mut model = SmallCnn::new(config.backbone.clone())?;
    let labels = data.train.labels();
    let warm = WarmStartData { thumbnails: &data.train.thumbnails, labels: &labels };
    warm_start(&mut model, warm, &config.emipld.training).map_err(Error::Training)?;
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub ids: Vec<String>,
    pub labels: Vec<u8>,
    pub scores: Vec<f64>,
    pub report: EvalReport,
    /// Patch scores against hidden patch labels.
    pub patch_auc: Option<f64>,
    /// The same, scoring each patch by its image label (the starting labels).
    pub broadcast_patch_auc: Option<f64>,
}

fn finish_evaluation(
    config: &RunConfig,
    split: &SplitData,
    scores: Vec<f64>,
    patch_scores: Option<Vec<Vec<f64>>>,
) -> Result<Evaluation> {
    let labels = split.labels();
    let ev = &config.evaluation;
    let report = evaluate(&scores, &labels, ev.threshold, &ev.recall_targets)?;
    let (mut patch_auc, mut broadcast_patch_auc) = (None, None);
    if let (Some(oracle), Some(patch_scores)) = (&split.oracle, &patch_scores) {
        let flat_oracle: Vec<u8> = oracle.concat();
        if flat_oracle.contains(&0) && flat_oracle.contains(&1) {
            patch_auc = Some(auc(&patch_scores.concat(), &flat_oracle)?);
            let broadcast: Vec<f64> = split
                .sets
                .iter()
                .flat_map(|s| std::iter::repeat(f64::from(s.image_label)).take(s.m()))
                .collect();
            broadcast_patch_auc = Some(auc(&broadcast, &flat_oracle)?);
        }
    }
    Ok(Evaluation {
        ids: split.records.iter().map(|r| r.id.clone()).collect(),
        labels,
        scores,
        report,
        patch_auc,
        broadcast_patch_auc,
    })
}

/// Image score = maximum patch score.
pub fn evaluate_patches<S: PatchScorer>(model: &S, config: &RunConfig, split: &SplitData) -> Result<Evaluation> {
    let patch_scores =
        split.sets.iter().map(|s| Ok(model.score_patches(&s.patches)?)).collect::<Result<Vec<Vec<f64>>>>()?;
    let scores = patch_scores.iter().map(|p| p.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    finish_evaluation(config, split, scores, Some(patch_scores))
}

/// Scores whole-image thumbnails (the baseline protocol).
pub fn evaluate_thumbnails<S: PatchScorer>(model: &S, config: &RunConfig, split: &SplitData) -> Result<Evaluation> {
    let scores = model.score_patches(&split.thumbnails)?;
    finish_evaluation(config, split, scores, None)
}

/// Equalizes and scores one raw image, as at inference time.
pub fn score_image<S: PatchScorer>(model: &S, config: &RunConfig, image: &Raster) -> Result<f64> {
    let eq = ioplin_core::preprocess::equalize(image, &config.preprocess);
    let grid = PatchGrid::for_image(&eq, model.input_size())?;
    let scores = model.score_patches(&partition(&eq, &grid)?)?;
    Ok(scores.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// AUC on the test split at each configured noise ratio. Noise is added to
/// the raw image before preprocessing.
pub fn robustness<S: PatchScorer>(model: &S, config: &RunConfig, split: &SplitData) -> Result<Vec<(f64, f64)>> {
    let ev = &config.evaluation;
    let seed = config.corpus.generate.seed;
    let labels = split.labels();
    ev.noise_ratios
        .iter()
        .map(|&ratio| {
            let scores = split
                .records
                .iter()
                .map(|r| {
                    let noisy = corrupt_raster(&r.pixels, ratio, ev.noise_sigma, noise_seed(seed, &r.id, ratio))?;
                    score_image(model, config, &noisy)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((ratio, auc(&scores, &labels)?))
        })
        .collect()
}

pub fn screen(evaluation: &Evaluation, threshold: f64) -> Result<ScreeningReport> {
    let entries = evaluation
        .ids
        .iter()
        .zip(&evaluation.scores)
        .zip(&evaluation.labels)
        .map(|((id, &score), &label)| ScreeningEntry { image_id: id.clone(), score, true_label: Some(label) })
        .collect();
    Ok(screen_scores(entries, threshold)?)
}

/// Rows of the ablation table; each toggles one ingredient on top of the
/// previous one, plus three single-ingredient removals from the full method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Whole-image scorer on unequalized thumbnails.
    BaselineThumbnail,
    /// Whole-image scorer on equalized thumbnails.
    Clahe,
    /// Patch distillation without warm start, plain cross-entropy.
    Irat,
    /// Adds the thumbnail warm start.
    Ft,
    /// Adds confidence-weighted cross-entropy: the full method.
    Pkbce,
    PlainBce,
    NoIrat,
    NoClahe,
}

impl Preset {
    pub const TABLE: [Preset; 5] = [Preset::BaselineThumbnail, Preset::Clahe, Preset::Irat, Preset::Ft, Preset::Pkbce];

    pub fn name(self) -> &'static str {
        match self {
            Preset::BaselineThumbnail => "baseline_thumbnail",
            Preset::Clahe => "+clahe",
            Preset::Irat => "+irat",
            Preset::Ft => "+ft",
            Preset::Pkbce => "+pkbce",
            Preset::PlainBce => "plain_bce",
            Preset::NoIrat => "no_irat",
            Preset::NoClahe => "no_clahe",
        }
    }

    pub fn parse(s: &str) -> Option<Preset> {
        let all = [
            Preset::BaselineThumbnail,
            Preset::Clahe,
            Preset::Irat,
            Preset::Ft,
            Preset::Pkbce,
            Preset::PlainBce,
            Preset::NoIrat,
            Preset::NoClahe,
        ];
        all.into_iter().find(|p| p.name() == s || p.name().trim_start_matches('+') == s)
    }

    /// Config for this preset, derived from `base`.
    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        let em = &mut c.emipld;
        match self {
            Preset::BaselineThumbnail => c.preprocess.mode = EqualizeMode::None,
            Preset::Clahe => c.preprocess.mode = EqualizeMode::Clahe,
            Preset::Irat => {
                c.preprocess.mode = EqualizeMode::Clahe;
                em.warm_start = false;
                em.loss_mode = LossMode::PlainBce;
            }
            Preset::Ft | Preset::PlainBce => {
                c.preprocess.mode = EqualizeMode::Clahe;
                em.warm_start = true;
                em.loss_mode = LossMode::PlainBce;
            }
            Preset::Pkbce => {
                c.preprocess.mode = EqualizeMode::Clahe;
                em.warm_start = true;
                em.loss_mode = LossMode::Pkbce;
            }
            Preset::NoIrat => {
                c.preprocess.mode = EqualizeMode::Clahe;
                em.warm_start = true;
                em.loss_mode = LossMode::Pkbce;
                em.irat_enabled = false;
            }
            Preset::NoClahe => {
                c.preprocess.mode = EqualizeMode::None;
                em.warm_start = true;
                em.loss_mode = LossMode::Pkbce;
            }
        }
        c.output.run_id = Some(format!("{}-{}", c.run_id(), self.name().trim_start_matches('+')));
        c
    }

    pub fn is_thumbnail(self) -> bool {
        matches!(self, Preset::BaselineThumbnail | Preset::Clahe)
    }
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub preset: Preset,
    pub evaluation: Evaluation,
    pub iterations: usize,
}

/// Runs each preset on the same corpus and evaluates it on the test split.
pub fn ablate(base: &RunConfig, corpus: &LoadedCorpus, presets: &[Preset], runs_dir: &Path) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for &preset in presets {
        let config = preset.apply(base);
        log::info!("ablation preset {}", preset.name());
        let data = prepare(&config, corpus)?;
        let row = if preset.is_thumbnail() {
            let model = train_thumbnail_model(&config, &data)?;
            AblationRow { preset, evaluation: evaluate_thumbnails(&model, &config, &data.test)?, iterations: 0 }
        } else {
            let result = train(&config, &data, runs_dir)?;
            AblationRow {
                preset,
                evaluation: evaluate_patches(&result.outcome.model, &config, &data.test)?,
                iterations: result.outcome.history.len(),
            }
        };
        rows.push(row);
    }
    Ok(rows)
}
