//! Run directories: checkpoints, label snapshots and the run manifest.
//!
//! ```text
//! runs/<run_id>/manifest.json     config snapshot, corpus hash, history
//! runs/<run_id>/ckpt_warm.bin     after thumbnail warm start
//! runs/<run_id>/ckpt_<j>.bin      after iteration j
//! runs/<run_id>/labels_<j>.tsv    image_id  t  label  score
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ioplin_core::emipld::{IterationRecord, RunObserver, TrainState};
use ioplin_core::plin::{decode_checkpoint, encode_checkpoint, SmallCnn};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{Error, Result};

pub const RUN_MANIFEST: &str = "manifest.json";

pub fn save_checkpoint(path: &Path, model: &SmallCnn) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<SmallCnn> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub status: RunStatus,
    pub config: RunConfig,
    pub corpus_hash: String,
    pub train_images: usize,
    pub validation_images: usize,
    pub warm_start_loss: Option<f64>,
    pub warm_checkpoint: Option<String>,
    pub iterations: Vec<IterationRecord>,
    pub converged: Option<bool>,
    pub final_checkpoint: Option<String>,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    /// Creates (or reuses) `<runs_dir>/<run_id>`, clearing files of an earlier
    /// run with the same id so that the directory reflects this run only.
    pub fn create(runs_dir: &Path, run_id: &str) -> Result<Self> {
        let path = runs_dir.join(run_id);
        if path.exists() {
            std::fs::remove_dir_all(&path).map_err(|e| Error::io(&path, e))?;
        }
        std::fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
        Ok(RunDir { path })
    }

    pub fn checkpoint_path(&self, iteration: usize) -> PathBuf {
        self.path.join(format!("ckpt_{iteration}.bin"))
    }

    pub fn labels_path(&self, iteration: usize) -> PathBuf {
        self.path.join(format!("labels_{iteration}.tsv"))
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<()> {
        let path = self.path.join(RUN_MANIFEST);
        let json = serde_json::to_string_pretty(manifest).expect("run manifest serializes");
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn write_labels(&self, state: &TrainState) -> Result<()> {
        let path = self.labels_path(state.iteration);
        std::fs::write(&path, label_snapshot(state)).map_err(|e| Error::io(&path, e))
    }
}

/// Rows `image_id  t  label  score`; the score column is `-` before the first
/// E-step.
pub fn label_snapshot(state: &TrainState) -> String {
    let mut out = String::from("image_id\tt\tlabel\tscore\n");
    for (i, (id, labels)) in state.image_ids.iter().zip(&state.labels).enumerate() {
        for (t, l) in labels.iter().enumerate() {
            match &state.prev_scores {
                Some(s) => {
                    let _ = writeln!(out, "{id}\t{t}\t{l}\t{:.9}", s[i][t]);
                }
                None => {
                    let _ = writeln!(out, "{id}\t{t}\t{l}\t-");
                }
            }
        }
    }
    out
}

/// Persists the run as it progresses; on failure the manifest keeps the
/// partial history and the error.
pub struct FsObserver {
    pub dir: RunDir,
    pub manifest: RunManifest,
}

impl FsObserver {
    fn rel(&self, path: &Path) -> String {
        path.strip_prefix(&self.dir.path).unwrap_or(path).display().to_string()
    }

    fn core_err(e: Error) -> ioplin_core::Error {
        ioplin_core::Error::Checkpoint(e.to_string())
    }
}

impl RunObserver<SmallCnn> for FsObserver {
    fn on_warm_start(&mut self, model: &SmallCnn, loss: Option<f64>) -> ioplin_core::Result<()> {
        self.manifest.warm_start_loss = loss;
        if loss.is_some() {
            let path = self.dir.path.join("ckpt_warm.bin");
            save_checkpoint(&path, model).map_err(Self::core_err)?;
            self.manifest.warm_checkpoint = Some(self.rel(&path));
        }
        self.dir.write_manifest(&self.manifest).map_err(Self::core_err)
    }

    fn on_init(&mut self, state: &TrainState) -> ioplin_core::Result<()> {
        self.dir.write_labels(state).map_err(Self::core_err)
    }

    fn on_iteration(
        &mut self,
        record: &mut IterationRecord,
        state: &TrainState,
        model: &SmallCnn,
    ) -> ioplin_core::Result<()> {
        let path = self.dir.checkpoint_path(record.iteration);
        let mut model = model.clone();
        model.set_source_checkpoint(format!("{}/{}", self.manifest.run_id, self.rel(&path)));
        save_checkpoint(&path, &model).map_err(Self::core_err)?;
        record.checkpoint = Some(self.rel(&path));
        self.dir.write_labels(state).map_err(Self::core_err)?;
        self.manifest.iterations.push(record.clone());
        self.dir.write_manifest(&self.manifest).map_err(Self::core_err)
    }

    fn on_failure(&mut self, history: &[IterationRecord], error: &ioplin_core::Error) {
        self.manifest.status = RunStatus::Failed;
        self.manifest.iterations = history.to_vec();
        self.manifest.error = Some(error.to_string());
        if let Err(e) = self.dir.write_manifest(&self.manifest) {
            log::error!("could not record the failed run: {e}");
        }
    }
}
