//! Histogram equalization, exact non-overlapping patch tiling and thumbnails.

mod equalize;
mod patch;
mod thumbnail;

pub use equalize::{clahe, equalize, equalize_hist};
pub use patch::{center_crop_to_tile, partition, reassemble, PatchGrid, PatchSet};
pub use thumbnail::make_thumbnail;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EqualizeMode {
    None,
    RegularHe,
    Clahe,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PreprocessConfig {
    pub mode: EqualizeMode,
    pub clip_limit: f64,
    /// Tiles across and down.
    pub tile_grid: (usize, usize),
    /// Square side of thumbnails; equals the scorer input size.
    pub thumbnail_size: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { mode: EqualizeMode::Clahe, clip_limit: 2.0, tile_grid: (8, 8), thumbnail_size: 64 }
    }
}

impl PreprocessConfig {
    /// Every violated constraint, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.clip_limit > 0.0) {
            out.push(format!("preprocess.clip_limit must be > 0, got {}", self.clip_limit));
        }
        if self.tile_grid.0 == 0 || self.tile_grid.1 == 0 {
            out.push(format!("preprocess.tile_grid must be at least 1x1, got {:?}", self.tile_grid));
        }
        if self.thumbnail_size == 0 {
            out.push("preprocess.thumbnail_size must be > 0".into());
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
