//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ioplin_core::detect::{render_overlay, score_map, Detection};
use ioplin_core::plin::{PatchScorer, SmallCnn};
use ioplin_core::preprocess::{equalize, partition, PatchGrid};
use serde::Serialize;

use crate::config::RunConfig;
use crate::imageio::{load_png, save_png};
use crate::pipeline::{self, Preset};
use crate::report;
use crate::store::load_checkpoint;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "ioplin", version, about = "Pavement disease detection from image-level labels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Master seed for generation, initialization and training.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override a config value, e.g. `--set emipld.r=0.3` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Center-crop images to the largest region that tiles into patches.
    #[arg(long)]
    pub resize_to_tile: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Decision threshold in (0,1).
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus (images, masks, manifest).
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Warm start plus patch-label distillation; writes a run directory.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// AUC, precision at recall targets and the PR curve on the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Split the test images into kept (score above threshold) and filtered.
    Screen {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Patch overlays and score maps for selected images.
    Localize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        /// Corpus image ids (repeatable).
        #[arg(long = "id")]
        ids: Vec<String>,
        /// Arbitrary PNG files (repeatable).
        #[arg(long = "image")]
        images: Vec<PathBuf>,
    },
    /// Test AUC under increasing pixel-noise ratios.
    Robustness {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Train and evaluate a list of presets on the same corpus.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated presets; defaults to the five-row table
        /// baseline_thumbnail,+clahe,+irat,+ft,+pkbce. Also: plain_bce, no_irat, no_clahe.
        #[arg(long, value_delimiter = ',')]
        preset: Vec<String>,
    },
}

#[derive(Serialize)]
struct CommandRecord<'a> {
    command: &'a str,
    argv: Vec<String>,
    config: &'a RunConfig,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut config = RunConfig::load(common.config.as_deref(), &common.overrides)?;
    if let Some(seed) = common.seed {
        config.set_seed(seed);
    }
    if common.resize_to_tile {
        config.corpus.resize_to_tile = true;
    }
    if let Some(out) = &common.out {
        config.output.dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn record(dir: &Path, command: &str, config: &RunConfig) -> Result<()> {
    let rec = CommandRecord { command, argv: std::env::args().collect(), config };
    report::write_json(&dir.join(format!("{command}.json")), &rec)
}

fn threshold(model: &ModelArgs, config: &RunConfig) -> Result<f64> {
    let t = model.threshold.unwrap_or(config.evaluation.threshold);
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Config(format!("--threshold must lie in (0,1), got {t}")));
    }
    Ok(t)
}

fn open_model(model: &ModelArgs, config: &RunConfig) -> Result<SmallCnn> {
    let path = model
        .checkpoint
        .as_deref()
        .ok_or_else(|| Error::Config("this command needs --checkpoint PATH (written by `train`)".into()))?;
    let net = load_checkpoint(path)?;
    if net.input_size() != config.backbone.input_size {
        return Err(Error::Config(format!(
            "checkpoint expects {}px patches but backbone.input_size is {}",
            net.input_size(),
            config.backbone.input_size
        )));
    }
    Ok(net)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common } => {
            let config = load_config(&common)?;
            let dir = common.out.clone().unwrap_or_else(|| config.corpus.dir.clone());
            let manifest = pipeline::generate(&config, &dir)?;
            record(&dir, "generate", &config)?;
            println!("wrote {} images to {}", manifest.records.len(), dir.display());
        }
        Command::Train { common } => {
            let config = load_config(&common)?;
            let corpus = pipeline::load_or_generate(&config)?;
            let data = pipeline::prepare(&config, &corpus)?;
            let result = pipeline::train(&config, &data, &config.output.dir.join("runs"))?;
            record(&result.run_dir.path, "train", &config)?;
            for r in &result.outcome.history {
                println!(
                    "iteration {:>2}  loss {:.4}  s {:.4}  changed {:>5}  val AUC {}",
                    r.iteration,
                    r.loss,
                    r.s,
                    r.change_count,
                    r.val_auc.map_or_else(|| "-".into(), |a| format!("{a:.4}"))
                );
            }
            let last = result.manifest.final_checkpoint.as_deref().unwrap_or("-");
            println!("run {} ({})", result.run_dir.path.display(), if result.outcome.converged { "converged" } else { "stopped at the iteration cap" });
            println!("final checkpoint {}", result.run_dir.path.join(last).display());
        }
        Command::Evaluate { common, model } => {
            let mut config = load_config(&common)?;
            config.evaluation.threshold = threshold(&model, &config)?;
            let net = open_model(&model, &config)?;
            let corpus = pipeline::load_or_generate(&config)?;
            let data = pipeline::prepare(&config, &corpus)?;
            let eval = pipeline::evaluate_patches(&net, &config, &data.test)?;
            let dir = config.output.dir.join("evaluate");
            report::write_evaluation(&dir, &eval)?;
            record(&dir, "evaluate", &config)?;
            print!("{}", report::summary(&eval));
        }
        Command::Screen { common, model } => {
            let config = load_config(&common)?;
            let theta = threshold(&model, &config)?;
            let net = open_model(&model, &config)?;
            let corpus = pipeline::load_or_generate(&config)?;
            let data = pipeline::prepare(&config, &corpus)?;
            let eval = pipeline::evaluate_patches(&net, &config, &data.test)?;
            let screening = pipeline::screen(&eval, theta)?;
            let dir = &config.output.dir;
            report::write_text(&dir.join("screening.tsv"), &report::screening_table(&screening))?;
            record(dir, "screen", &config)?;
            print!("{}", report::screening_summary(&screening));
        }
        Command::Localize { common, model, ids, images } => {
            let config = load_config(&common)?;
            let theta = threshold(&model, &config)?;
            let net = open_model(&model, &config)?;
            if ids.is_empty() && images.is_empty() {
                return Err(Error::Config("localize needs at least one --id or --image".into()));
            }
            let mut inputs = Vec::new();
            if !ids.is_empty() {
                let corpus = pipeline::load_or_generate(&config)?;
                for id in &ids {
                    let rec = corpus
                        .records
                        .iter()
                        .find(|r| &r.id == id)
                        .ok_or_else(|| Error::Data(format!("no image with id {id} in the corpus")))?;
                    inputs.push((id.clone(), rec.pixels.clone()));
                }
            }
            for path in &images {
                let mut img = load_png(path)?;
                if config.corpus.resize_to_tile {
                    img = ioplin_core::preprocess::center_crop_to_tile(&img, net.input_size())?;
                }
                let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into());
                inputs.push((id, img));
            }
            let dir = config.output.dir.join("overlays");
            for (id, img) in inputs {
                let eq = equalize(&img, &config.preprocess);
                let grid = PatchGrid::for_image(&eq, net.input_size())
                    .map_err(|e| Error::Data(format!("image {id}: {e}")))?;
                let scores = net.score_patches(&partition(&eq, &grid)?)?;
                let det = Detection::from_scores(&id, grid, scores, theta)?;
                save_png(&dir.join(format!("{id}.png")), &render_overlay(&det, &img)?)?;
                report::write_text(&dir.join(format!("{id}.scores.tsv")), &score_map(&det))?;
                println!(
                    "{id}: score {:.4} -> {} ({} of {} patches flagged)",
                    det.image_score,
                    if det.decision { "diseased" } else { "normal" },
                    det.flagged().count(),
                    grid.m()
                );
            }
            record(&dir, "localize", &config)?;
        }
        Command::Robustness { common, model } => {
            let config = load_config(&common)?;
            let net = open_model(&model, &config)?;
            let corpus = pipeline::load_or_generate(&config)?;
            let data = pipeline::prepare(&config, &corpus)?;
            let rows = pipeline::robustness(&net, &config, &data.test)?;
            let dir = &config.output.dir;
            report::write_text(&dir.join("robustness.tsv"), &report::robustness_table(&rows))?;
            record(dir, "robustness", &config)?;
            print!("{}", report::robustness_table(&rows));
        }
        Command::Ablate { common, preset } => {
            let config = load_config(&common)?;
            let presets = if preset.is_empty() {
                Preset::TABLE.to_vec()
            } else {
                preset
                    .iter()
                    .map(|p| Preset::parse(p.trim()).ok_or_else(|| Error::Config(format!("unknown preset `{p}`"))))
                    .collect::<Result<Vec<_>>>()?
            };
            let corpus = pipeline::load_or_generate(&config)?;
            let rows = pipeline::ablate(&config, &corpus, &presets, &config.output.dir.join("runs"))?;
            let table = report::ablation_table(&rows);
            let dir = &config.output.dir;
            report::write_text(&dir.join("ablation.tsv"), &table)?;
            record(dir, "ablate", &config)?;
            print!("{table}");
        }
    }
    Ok(())
}
