//! 8-bit interleaved rasters.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// An 8-bit raster with 1 (grayscale) or 3 (RGB) interleaved channels,
/// stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        assert!(channels == 1 || channels == 3, "unsupported channel count {channels}");
        Raster { width, height, channels, data: vec![value; width * height * channels] }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(alloc::format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::mismatch(width * height * channels, data.len()));
        }
        Ok(Raster { width, height, channels, data })
    }

    /// Builds a grayscale raster from a per-pixel function.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Raster { width, height, channels: 1, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Luma (BT.601 weights), rounded. Grayscale rasters are returned as-is.
    pub fn luminance(&self) -> Raster {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| {
                let y = 0.299 * f32::from(p[0]) + 0.587 * f32::from(p[1]) + 0.114 * f32::from(p[2]);
                libm::roundf(y).clamp(0.0, 255.0) as u8
            })
            .collect();
        Raster { width: self.width, height: self.height, channels: 1, data }
    }

    /// Grayscale replicated into three channels; RGB is returned as-is.
    pub fn to_rgb(&self) -> Raster {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Raster { width: self.width, height: self.height, channels: 3, data }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Raster> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::mismatch(
                alloc::format!("crop inside {}x{}", self.width, self.height),
                alloc::format!("{w}x{h} at ({x0},{y0})"),
            ));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(w * h * c);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * c;
            data.extend_from_slice(&self.data[start..start + w * c]);
        }
        Ok(Raster { width: w, height: h, channels: c, data })
    }

    /// Copies `src` into `self` with its top-left corner at `(x0, y0)`.
    pub fn paste(&mut self, src: &Raster, x0: usize, y0: usize) -> Result<()> {
        if src.channels != self.channels || x0 + src.width > self.width || y0 + src.height > self.height {
            return Err(Error::mismatch(
                alloc::format!("{}x{}x{}", self.width, self.height, self.channels),
                alloc::format!("{}x{}x{} at ({x0},{y0})", src.width, src.height, src.channels),
            ));
        }
        let c = self.channels;
        for y in 0..src.height {
            let dst = ((y0 + y) * self.width + x0) * c;
            let s = y * src.width * c;
            self.data[dst..dst + src.width * c].copy_from_slice(&src.data[s..s + src.width * c]);
        }
        Ok(())
    }

    pub fn flip_horizontal(&self) -> Raster {
        let c = self.channels;
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                let s = (y * self.width + x) * c;
                let d = (y * self.width + (self.width - 1 - x)) * c;
                out.data[d..d + c].copy_from_slice(&self.data[s..s + c]);
            }
        }
        out
    }

    pub fn flip_vertical(&self) -> Raster {
        let row = self.width * self.channels;
        let mut out = self.clone();
        for y in 0..self.height {
            let d = (self.height - 1 - y) * row;
            out.data[d..d + row].copy_from_slice(&self.data[y * row..(y + 1) * row]);
        }
        out
    }
}
