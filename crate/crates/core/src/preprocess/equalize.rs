use alloc::vec;
use alloc::vec::Vec;

use super::{EqualizeMode, PreprocessConfig};
use crate::Raster;

/// Applies the configured equalization. Mappings are computed on luminance and
/// applied to every channel, so grayscale and color inputs share one path.
pub fn equalize(image: &Raster, config: &PreprocessConfig) -> Raster {
    match config.mode {
        EqualizeMode::None => image.clone(),
        EqualizeMode::RegularHe => equalize_hist(image),
        EqualizeMode::Clahe => clahe(image, config.clip_limit, config.tile_grid),
    }
}

fn histogram(pixels: impl Iterator<Item = u8>) -> [u32; 256] {
    let mut hist = [0u32; 256];
    for v in pixels {
        hist[v as usize] += 1;
    }
    hist
}

/// Global histogram equalization: `lut[v] = round((cdf[v] - cdf_min) / (N - cdf_min) * 255)`.
/// A single-level histogram maps to itself.
pub fn equalize_hist(image: &Raster) -> Raster {
    let luma = image.luminance();
    let hist = histogram(luma.as_slice().iter().copied());
    let total = luma.pixel_count() as u64;

    let mut lut = [0u8; 256];
    let first = hist.iter().position(|&h| h > 0);
    match first {
        Some(first) if u64::from(hist[first]) < total => {
            let cdf_min = u64::from(hist[first]);
            let scale = 255.0 / (total - cdf_min) as f64;
            let mut cdf = 0u64;
            for (v, &h) in hist.iter().enumerate() {
                cdf += u64::from(h);
                let mapped = (cdf.saturating_sub(cdf_min)) as f64 * scale;
                lut[v] = libm::round(mapped).clamp(0.0, 255.0) as u8;
            }
        }
        _ => {
            for (v, slot) in lut.iter_mut().enumerate() {
                *slot = v as u8;
            }
        }
    }

    let mut out = image.clone();
    for v in out.as_mut_slice() {
        *v = lut[*v as usize];
    }
    out
}

/// Tile bounds `[start, end)` splitting `len` into `n` near-equal parts.
fn tile_bounds(len: usize, n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|i| (i * len / n, (i + 1) * len / n)).collect()
}

fn clipped_lut(mut hist: [u32; 256], area: u32, clip_limit: f64) -> [u8; 256] {
    let limit = ((clip_limit * f64::from(area) / 256.0) as u32).max(1);
    let mut clipped = 0u32;
    for h in hist.iter_mut() {
        if *h > limit {
            clipped += *h - limit;
            *h = limit;
        }
    }
    let batch = clipped / 256;
    let mut residual = clipped - batch * 256;
    for h in hist.iter_mut() {
        *h += batch;
    }
    if residual > 0 {
        let step = (256 / residual as usize).max(1);
        let mut i = 0;
        while i < 256 && residual > 0 {
            hist[i] += 1;
            residual -= 1;
            i += step;
        }
    }

    let scale = 255.0 / f64::from(area.max(1));
    let mut lut = [0u8; 256];
    let mut sum = 0u32;
    for (slot, &h) in lut.iter_mut().zip(hist.iter()) {
        sum += h;
        *slot = libm::round(f64::from(sum) * scale).clamp(0.0, 255.0) as u8;
    }
    lut
}

/// Contrast-limited adaptive histogram equalization.
///
/// Each tile gets a clip-limited equalization table (the absolute limit is
/// `clip_limit * tile_area / 256`, excess mass is spread evenly over all bins);
/// every pixel is mapped by bilinear interpolation between the tables of the
/// four nearest tile centers.
pub fn clahe(image: &Raster, clip_limit: f64, tile_grid: (usize, usize)) -> Raster {
    let (w, h) = (image.width(), image.height());
    if w == 0 || h == 0 {
        return image.clone();
    }
    let tiles_x = tile_grid.0.clamp(1, w);
    let tiles_y = tile_grid.1.clamp(1, h);
    let luma = image.luminance();
    let xs = tile_bounds(w, tiles_x);
    let ys = tile_bounds(h, tiles_y);

    let mut luts = vec![[0u8; 256]; tiles_x * tiles_y];
    for (ty, &(y0, y1)) in ys.iter().enumerate() {
        for (tx, &(x0, x1)) in xs.iter().enumerate() {
            let mut hist = [0u32; 256];
            for y in y0..y1 {
                for &v in &luma.as_slice()[y * w + x0..y * w + x1] {
                    hist[v as usize] += 1;
                }
            }
            let area = ((x1 - x0) * (y1 - y0)) as u32;
            luts[ty * tiles_x + tx] = clipped_lut(hist, area, clip_limit);
        }
    }

    // Per-column and per-row interpolation anchors.
    let anchors = |len: usize, n: usize| -> Vec<(usize, usize, f32)> {
        let tile = len as f32 / n as f32;
        (0..len)
            .map(|p| {
                let f = p as f32 / tile - 0.5;
                let lo = libm::floorf(f);
                let a = f - lo;
                let lo = lo as isize;
                let i1 = lo.max(0) as usize;
                let i2 = ((lo + 1).max(0) as usize).min(n - 1);
                (i1.min(n - 1), i2, a)
            })
            .collect()
    };
    let ax = anchors(w, tiles_x);
    let ay = anchors(h, tiles_y);

    let c = image.channels();
    let mut out = image.clone();
    let src = image.as_slice();
    let dst = out.as_mut_slice();
    for y in 0..h {
        let (ty1, ty2, ya) = ay[y];
        for x in 0..w {
            let (tx1, tx2, xa) = ax[x];
            let l11 = &luts[ty1 * tiles_x + tx1];
            let l12 = &luts[ty1 * tiles_x + tx2];
            let l21 = &luts[ty2 * tiles_x + tx1];
            let l22 = &luts[ty2 * tiles_x + tx2];
            for ch in 0..c {
                let i = (y * w + x) * c + ch;
                let v = src[i] as usize;
                let top = f32::from(l11[v]) * (1.0 - xa) + f32::from(l12[v]) * xa;
                let bottom = f32::from(l21[v]) * (1.0 - xa) + f32::from(l22[v]) * xa;
                dst[i] = libm::roundf(top * (1.0 - ya) + bottom * ya).clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(mode: EqualizeMode) -> PreprocessConfig {
        PreprocessConfig { mode, ..PreprocessConfig::default() }
    }

    #[test]
    fn none_is_identity() {
        let img = Raster::from_fn(32, 16, |x, y| (x * 3 + y * 5) as u8);
        assert_eq!(equalize(&img, &config(EqualizeMode::None)), img);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = Raster::filled(32, 16, 1, 77);
        let he = equalize(&img, &config(EqualizeMode::RegularHe));
        assert!(he.as_slice().iter().all(|&v| v == he.as_slice()[0]));
        let cl = equalize(&img, &config(EqualizeMode::Clahe));
        assert!(cl.as_slice().iter().all(|&v| v == cl.as_slice()[0]));
    }

    /// Independent oracle: count pixels at or below each level by scanning.
    fn he_oracle(img: &Raster) -> Vec<u8> {
        let px = img.as_slice();
        let n = px.len() as f64;
        let min_level = *px.iter().min().unwrap();
        let cdf_min = px.iter().filter(|&&p| p == min_level).count() as f64;
        px.iter()
            .map(|&v| {
                let cdf = px.iter().filter(|&&p| p <= v).count() as f64;
                libm::round((cdf - cdf_min) / (n - cdf_min) * 255.0) as u8
            })
            .collect()
    }

    #[test]
    fn two_level_image_matches_cdf_oracle() {
        let img = Raster::from_fn(16, 8, |x, _| if x % 2 == 0 { 50 } else { 200 });
        let he = equalize_hist(&img);
        assert_eq!(he.as_slice(), he_oracle(&img).as_slice());
        assert_eq!(he.get(0, 0, 0), 0);
        assert_eq!(he.get(1, 0, 0), 255);
    }

    #[test]
    fn ramp_matches_cdf_oracle() {
        let img = Raster::from_fn(37, 11, |x, y| ((x * x + 3 * y) % 97 + 40) as u8);
        assert_eq!(equalize_hist(&img).as_slice(), he_oracle(&img).as_slice());
    }

    #[test]
    fn clahe_with_one_tile_and_no_clipping_is_global_cdf() {
        // A huge clip limit disables clipping; one tile has a single LUT, so
        // the result is round(cdf * 255 / N).
        let img = Raster::from_fn(16, 16, |x, y| (x * 16 + y) as u8);
        let out = clahe(&img, 1e9, (1, 1));
        for (o, i) in out.as_slice().iter().zip(img.as_slice()) {
            let cdf = img.as_slice().iter().filter(|&&p| p <= *i).count() as f64;
            assert_eq!(*o, libm::round(cdf * 255.0 / 256.0) as u8);
        }
    }

    #[test]
    fn clahe_flattens_illumination_gradient() {
        // Same texture under a left-to-right brightness ramp.
        let img = Raster::from_fn(512, 64, |x, y| {
            let tex = ((x * 7 + y * 13) % 9) as f32 * 3.0;
            (40.0 + x as f32 * 0.3 + tex) as u8
        });
        let mild = clahe(&img, 2.0, (8, 8));
        let out = clahe(&img, 40.0, (8, 8));
        let mean = |r: &Raster, x0: usize| -> f32 {
            let mut s = 0.0;
            for y in 0..64 {
                for x in x0..x0 + 64 {
                    s += f32::from(r.get(x, y, 0));
                }
            }
            s / (64.0 * 64.0)
        };
        let before = mean(&img, 448) - mean(&img, 0);
        let after = mean(&out, 448) - mean(&out, 0);
        assert!(after.abs() < before.abs() * 0.5, "before {before} after {after}");
        let mild = mean(&mild, 448) - mean(&mild, 0);
        assert!(mild.abs() < before.abs() * 0.9 && mild.abs() > after.abs(), "{before} {mild} {after}");
    }

    #[test]
    fn color_mapping_is_shared_across_channels() {
        let gray = Raster::from_fn(24, 24, |x, y| (x * 9 + y * 2) as u8);
        let rgb = gray.to_rgb();
        let cfg = config(EqualizeMode::Clahe);
        let g = equalize(&gray, &cfg);
        let c = equalize(&rgb, &cfg);
        assert_eq!(c, g.to_rgb());
    }
}
