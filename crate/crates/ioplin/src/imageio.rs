//! PNG reading and writing for [`Raster`]s.

use std::path::Path;

use image::{DynamicImage, ExtendedColorType, ImageFormat};
use ioplin_core::Raster;

use crate::{Error, Result};

/// Reads a PNG as 8-bit grayscale or RGB; alpha is dropped and 16-bit
/// samples are reduced to 8 bits.
pub fn load_png(path: &Path) -> Result<Raster> {
    let img = image::open(path).map_err(|source| Error::Image { path: path.into(), source })?;
    let gray = matches!(img.color().channel_count(), 1 | 2);
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raster = if gray {
        Raster::from_vec(w, h, 1, img.into_luma8().into_raw())
    } else {
        Raster::from_vec(w, h, 3, DynamicImage::into_rgb8(img).into_raw())
    };
    Ok(raster?)
}

pub fn save_png(path: &Path, raster: &Raster) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let color = if raster.channels() == 1 { ExtendedColorType::L8 } else { ExtendedColorType::Rgb8 };
    image::save_buffer_with_format(
        path,
        raster.as_slice(),
        raster.width() as u32,
        raster.height() as u32,
        color,
        ImageFormat::Png,
    )
    .map_err(|source| Error::Image { path: path.into(), source })
}
