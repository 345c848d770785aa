use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Raster, Result};

/// Exact row-major tiling of an image into `rows x cols` square patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PatchGrid {
    pub patch_size: usize,
    pub rows: usize,
    pub cols: usize,
}

impl PatchGrid {
    /// Grid for a `width x height` image; both sides must be positive multiples
    /// of `patch_size`.
    pub fn for_dims(width: usize, height: usize, patch_size: usize) -> Result<Self> {
        if patch_size == 0 || width == 0 || height == 0 || width % patch_size != 0 || height % patch_size != 0 {
            return Err(Error::Geometry { width, height, patch: patch_size });
        }
        Ok(PatchGrid { patch_size, rows: height / patch_size, cols: width / patch_size })
    }

    pub fn for_image(image: &Raster, patch_size: usize) -> Result<Self> {
        Self::for_dims(image.width(), image.height(), patch_size)
    }

    /// Number of patches.
    #[inline]
    pub fn m(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.cols * self.patch_size
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.rows * self.patch_size
    }

    /// (row, col) of patch index `t`.
    #[inline]
    pub fn position(&self, t: usize) -> (usize, usize) {
        (t / self.cols, t % self.cols)
    }

    /// Pixel origin (x, y) of patch `t`.
    #[inline]
    pub fn origin(&self, t: usize) -> (usize, usize) {
        let (r, c) = self.position(t);
        (c * self.patch_size, r * self.patch_size)
    }

    fn check(&self, image: &Raster) -> Result<()> {
        if image.width() != self.width() || image.height() != self.height() {
            return Err(Error::Geometry { width: image.width(), height: image.height(), patch: self.patch_size });
        }
        Ok(())
    }
}

/// The patches of one image with their working labels and latest scores.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub image_id: String,
    pub image_label: u8,
    pub grid: PatchGrid,
    pub patches: Vec<Raster>,
    pub working_labels: Vec<u8>,
    pub scores: Option<Vec<f64>>,
}

impl PatchSet {
    /// Partitions `image` and seeds every working label with the image label.
    pub fn from_image(image_id: &str, image_label: u8, image: &Raster, patch_size: usize) -> Result<Self> {
        if image_label > 1 {
            return Err(Error::InvalidArgument(format!("image label must be 0 or 1, got {image_label}")));
        }
        let grid = PatchGrid::for_image(image, patch_size)?;
        let patches = partition(image, &grid)?;
        Ok(PatchSet {
            image_id: image_id.into(),
            image_label,
            grid,
            working_labels: alloc::vec![image_label; patches.len()],
            patches,
            scores: None,
        })
    }

    pub fn m(&self) -> usize {
        self.patches.len()
    }
}

/// Cuts `image` into `grid.m()` patches in row-major order.
pub fn partition(image: &Raster, grid: &PatchGrid) -> Result<Vec<Raster>> {
    grid.check(image)?;
    (0..grid.m())
        .map(|t| {
            let (x, y) = grid.origin(t);
            image.crop(x, y, grid.patch_size, grid.patch_size)
        })
        .collect()
}

/// Inverse of [`partition`].
pub fn reassemble(patches: &[Raster], grid: &PatchGrid) -> Result<Raster> {
    if patches.len() != grid.m() {
        return Err(Error::mismatch(format!("{} patches", grid.m()), patches.len()));
    }
    let channels = patches.first().map_or(1, Raster::channels);
    let mut out = Raster::new(grid.width(), grid.height(), channels);
    for (t, p) in patches.iter().enumerate() {
        if p.width() != grid.patch_size || p.height() != grid.patch_size {
            return Err(Error::mismatch(
                format!("{0}x{0} patch", grid.patch_size),
                format!("{}x{}", p.width(), p.height()),
            ));
        }
        let (x, y) = grid.origin(t);
        out.paste(p, x, y)?;
    }
    Ok(out)
}

/// Centered crop to the largest region that tiles exactly; errors when the
/// image is smaller than one patch.
pub fn center_crop_to_tile(image: &Raster, patch_size: usize) -> Result<Raster> {
    let w = image.width() / patch_size.max(1) * patch_size;
    let h = image.height() / patch_size.max(1) * patch_size;
    if patch_size == 0 || w == 0 || h == 0 {
        return Err(Error::Geometry { width: image.width(), height: image.height(), patch: patch_size });
    }
    image.crop((image.width() - w) / 2, (image.height() - h) / 2, w, h)
}
