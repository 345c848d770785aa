//! Run configuration: one TOML document with a section per module, plus
//! `section.key=value` overrides from the command line.
//!
//! ```toml
//! seed = 7
//!
//! [corpus]
//! dir = "data"
//!
//! [corpus.generate]
//! n_train_pos = 200
//!
//! [preprocess]
//! mode = "clahe"
//!
//! [emipld]
//! r = 0.45
//! convergence = { min_change_fraction = 0.001 }
//!
//! [emipld.training]
//! epochs_per_mstep = 2
//! ```

use std::path::{Path, PathBuf};

use ioplin_core::corpus::GenerationSpec;
use ioplin_core::emipld::EmipldConfig;
use ioplin_core::plin::SmallCnnConfig;
use ioplin_core::preprocess::PreprocessConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    /// Corpus directory; `generate` writes here and the other commands read
    /// `<dir>/manifest.tsv` unless `manifest` is set.
    pub dir: PathBuf,
    pub manifest: Option<PathBuf>,
    /// Center-crop images that do not tile exactly instead of rejecting them.
    pub resize_to_tile: bool,
    pub generate: GenerationSpec,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection { dir: "data".into(), manifest: None, resize_to_tile: false, generate: GenerationSpec::default() }
    }
}

impl CorpusSection {
    pub fn manifest_path(&self) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| self.dir.join(crate::manifest::MANIFEST_FILE))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub recall_targets: Vec<f64>,
    pub noise_ratios: Vec<f64>,
    /// Noise standard deviation as a fraction of the 0..255 range.
    pub noise_sigma: f64,
    pub threshold: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            recall_targets: vec![0.9, 0.95],
            noise_ratios: vec![0.0, 0.1, 0.2, 0.3],
            noise_sigma: 0.2,
            threshold: ioplin_core::detect::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Defaults to a name derived from the seed and the config hash.
    pub run_id: Option<String>,
    /// Keep equalized images beside the originals as `*.clahe.png`.
    pub cache_preprocessed: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into(), run_id: None, cache_preprocessed: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, replaces the generation, initialization and training seeds.
    pub seed: Option<u64>,
    pub corpus: CorpusSection,
    pub preprocess: PreprocessConfig,
    pub backbone: SmallCnnConfig,
    pub emipld: EmipldConfig,
    pub evaluation: EvaluationSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            corpus: CorpusSection::default(),
            preprocess: PreprocessConfig::default(),
            backbone: SmallCnnConfig::default(),
            emipld: EmipldConfig::default(),
            evaluation: EvaluationSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// Sets `dotted.key` in a TOML table, creating intermediate tables.
fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config(format!("empty override key `{key}`")))?;
    let mut cur = table;
    for part in parts {
        let entry = cur.entry(part).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a section")))?;
    }
    cur.insert(last.into(), value);
    Ok(())
}

/// Parses the right-hand side of an override as a TOML value; bare words
/// become strings.
fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

impl RunConfig {
    /// Reads the optional config file, applies `key=value` overrides, fills
    /// in the master seed and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            let (key, value) =
                o.split_once('=').ok_or_else(|| Error::Config(format!("override `{o}` must look like key=value")))?;
            set_path(&mut table, key.trim(), parse_value(value.trim()))?;
        }
        let mut config: RunConfig = toml::Value::Table(table).try_into().map_err(|e| Error::Config(format!("{e}")))?;
        config.sync_seed();
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes to TOML")
    }

    /// Copies the master seed, if any, into every seeded component.
    pub fn sync_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.corpus.generate.seed = seed;
            self.backbone.init_seed = seed;
            self.emipld.training.seed = seed;
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.sync_seed();
    }

    /// Every violated constraint across all sections.
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.corpus.generate.problems();
        out.extend(self.preprocess.problems());
        out.extend(self.backbone.problems());
        out.extend(self.emipld.problems());
        let ev = &self.evaluation;
        for &t in &ev.recall_targets {
            if !(t > 0.0 && t <= 1.0) {
                out.push(format!("evaluation.recall_targets entries must lie in (0,1], got {t}"));
            }
        }
        for &rho in &ev.noise_ratios {
            if !(0.0..=1.0).contains(&rho) {
                out.push(format!("evaluation.noise_ratios entries must lie in [0,1], got {rho}"));
            }
        }
        if !(ev.noise_sigma > 0.0) {
            out.push(format!("evaluation.noise_sigma must be > 0, got {}", ev.noise_sigma));
        }
        if !(ev.threshold > 0.0 && ev.threshold < 1.0) {
            out.push(format!("evaluation.threshold must lie in (0,1), got {}", ev.threshold));
        }
        if self.preprocess.thumbnail_size != self.backbone.input_size {
            out.push(format!(
                "preprocess.thumbnail_size ({}) must equal backbone.input_size ({})",
                self.preprocess.thumbnail_size, self.backbone.input_size
            ));
        }
        if self.corpus.generate.patch_size != self.backbone.input_size {
            out.push(format!(
                "corpus.generate.patch_size ({}) must equal backbone.input_size ({})",
                self.corpus.generate.patch_size, self.backbone.input_size
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("\n  ")))
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hash_json(self)
    }

    pub fn run_id(&self) -> String {
        self.output.run_id.clone().unwrap_or_else(|| {
            format!("run-s{}-{}", self.emipld.training.seed, &self.hash()[..10])
        })
    }
}

pub fn hash_json<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("value serializes to JSON");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}
