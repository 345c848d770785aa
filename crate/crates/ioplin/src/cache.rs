//! Equalized images cached beside their originals as
//! `<stem>.<key>.clahe.png`, where `key` hashes the preprocessing settings.

use std::path::{Path, PathBuf};

use ioplin_core::preprocess::{equalize, EqualizeMode, PreprocessConfig};
use ioplin_core::Raster;

use crate::config::hash_json;
use crate::imageio::{load_png, save_png};
use crate::Result;

#[derive(Debug, Clone)]
pub struct PreprocessCache {
    config: PreprocessConfig,
    key: String,
    enabled: bool,
}

impl PreprocessCache {
    /// `crop` is part of the key because cropping happens before equalization.
    pub fn new(config: &PreprocessConfig, crop: Option<usize>, enabled: bool) -> Self {
        let key = hash_json(&(config, crop))[..12].to_string();
        PreprocessCache { config: config.clone(), key, enabled: enabled && config.mode != EqualizeMode::None }
    }

    pub fn path_for(&self, source: &Path) -> PathBuf {
        let stem = source.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        source.with_file_name(format!("{stem}.{}.clahe.png", self.key))
    }

    /// Equalizes `image`, reading or filling the cache entry for `source`.
    pub fn equalize(&self, image: &Raster, source: Option<&Path>) -> Result<Raster> {
        let Some(source) = source.filter(|_| self.enabled) else {
            return Ok(equalize(image, &self.config));
        };
        let path = self.path_for(source);
        if path.is_file() {
            if let Ok(cached) = load_png(&path) {
                if cached.width() == image.width() && cached.height() == image.height() {
                    return Ok(cached);
                }
            }
            log::warn!("ignoring stale preprocessing cache {}", path.display());
        }
        let out = equalize(image, &self.config);
        save_png(&path, &out)?;
        Ok(out)
    }
}
