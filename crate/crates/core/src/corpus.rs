//! Synthetic pavement corpus with hidden defect masks, the mask-to-patch
//! oracle, and the Gaussian pixel corruption used for robustness sweeps.
//!
//! Every image is a pure function of `(spec, seed, index)`: a textured asphalt
//! background under a smooth illumination ramp, optional lane markings and oil
//! stains (present in both classes), and for diseased images one or more
//! cracks, potholes or rectangular repairs.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f32::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::preprocess::PatchGrid;
use crate::{seed, Error, Raster, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Source {
    Synthetic,
    External,
}

/// One pavement image with its image-level label (0 normal, 1 diseased).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub pixels: Raster,
    pub label: u8,
    pub split: Split,
    pub source: Source,
}

/// Binary defect mask (values 0/1) aligned with a synthetic image.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectMask {
    pub image_id: String,
    pub mask: Raster,
}

impl DefectMask {
    pub fn defect_pixels(&self) -> usize {
        self.mask.as_slice().iter().filter(|&&v| v != 0).count()
    }
}

/// Relative frequency of each defect style in diseased images.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DefectStyleMix {
    pub crack: f64,
    pub pothole: f64,
    pub repair: f64,
}

impl Default for DefectStyleMix {
    fn default() -> Self {
        DefectStyleMix { crack: 0.6, pothole: 0.2, repair: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct GenerationSpec {
    pub n_train_pos: usize,
    pub n_train_neg: usize,
    pub n_test_pos: usize,
    pub n_test_neg: usize,
    pub width: usize,
    pub height: usize,
    pub patch_size: usize,
    pub style_mix: DefectStyleMix,
    /// Defect pixels a patch needs to count as diseased.
    pub min_defect_pixels: usize,
    pub lane_marking_prob: f64,
    pub stain_prob: f64,
    pub seed: u64,
}

impl Default for GenerationSpec {
    fn default() -> Self {
        GenerationSpec {
            n_train_pos: 200,
            n_train_neg: 200,
            n_test_pos: 200,
            n_test_neg: 200,
            width: 256,
            height: 192,
            patch_size: 64,
            style_mix: DefectStyleMix::default(),
            min_defect_pixels: 25,
            lane_marking_prob: 0.3,
            stain_prob: 0.3,
            seed: 1,
        }
    }
}

impl GenerationSpec {
    /// Every violated constraint, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = PatchGrid::for_dims(self.width, self.height, self.patch_size) {
            out.push(format!("corpus.generate: {e}"));
        }
        let m = self.style_mix;
        if !(m.crack >= 0.0 && m.pothole >= 0.0 && m.repair >= 0.0) || m.crack + m.pothole + m.repair <= 0.0 {
            out.push(format!("corpus.generate.style_mix weights must be non-negative with a positive sum: {m:?}"));
        }
        for (name, p) in [("lane_marking_prob", self.lane_marking_prob), ("stain_prob", self.stain_prob)] {
            if !(0.0..=1.0).contains(&p) {
                out.push(format!("corpus.generate.{name} must lie in [0,1], got {p}"));
            }
        }
        if self.min_defect_pixels == 0 || self.min_defect_pixels > self.patch_size * self.patch_size {
            out.push(format!(
                "corpus.generate.min_defect_pixels must lie in [1, {}], got {}",
                self.patch_size * self.patch_size,
                self.min_defect_pixels
            ));
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

    pub fn total(&self) -> usize {
        self.n_train_pos + self.n_train_neg + self.n_test_pos + self.n_test_neg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    pub spec: GenerationSpec,
    pub records: Vec<ImageRecord>,
    /// Aligned with `records`; all-zero for normal images.
    pub masks: Vec<DefectMask>,
}

const TAG_ORDER: u64 = 0x006f_7264_6572;
const TAG_IMAGE: u64 = 0x0069_6d61_6765;

/// Generates the full corpus. Within each split the label order is a seeded
/// shuffle; ids are `train_NNNNN` / `test_NNNNN`.
pub fn generate_corpus(spec: &GenerationSpec) -> Result<GeneratedCorpus> {
    spec.validate()?;
    let mut jobs = Vec::with_capacity(spec.total());
    for (split, pos, neg) in [
        (Split::Train, spec.n_train_pos, spec.n_train_neg),
        (Split::Test, spec.n_test_pos, spec.n_test_neg),
    ] {
        let mut labels: Vec<u8> = core::iter::repeat(1).take(pos).chain(core::iter::repeat(0).take(neg)).collect();
        let mut rng = seed::rng(spec.seed, TAG_ORDER, split as u64);
        rand::seq::SliceRandom::shuffle(labels.as_mut_slice(), &mut rng);
        for (i, label) in labels.into_iter().enumerate() {
            jobs.push((format!("{}_{i:05}", split.as_str()), split, label));
        }
    }

    let mut records = Vec::with_capacity(jobs.len());
    let mut masks = Vec::with_capacity(jobs.len());
    for (index, (id, split, label)) in jobs.into_iter().enumerate() {
        let (pixels, mask) = generate_image(spec, label, index as u64)?;
        masks.push(DefectMask { image_id: id.clone(), mask });
        records.push(ImageRecord { id, pixels, label, split, source: Source::Synthetic });
    }
    Ok(GeneratedCorpus { spec: spec.clone(), records, masks })
}

/// One synthetic image and its defect mask, determined by `(spec, label, index)`.
pub fn generate_image(spec: &GenerationSpec, label: u8, index: u64) -> Result<(Raster, Raster)> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed, TAG_IMAGE, index);
    let mut canvas = Canvas::background(spec.width, spec.height, &mut rng);

    if rng.random::<f64>() < spec.lane_marking_prob {
        canvas.lane_marking(&mut rng);
    }
    if rng.random::<f64>() < spec.stain_prob {
        canvas.stain(&mut rng);
    }

    if label == 1 {
        let grid = PatchGrid::for_dims(spec.width, spec.height, spec.patch_size)?;
        let extra = usize::from(rng.random::<f64>() < 0.35);
        for _ in 0..=extra {
            canvas.defect(spec.style_mix, &mut rng);
        }
        // Keep drawing until at least one patch passes the oracle rule.
        let mut attempts = 0;
        while !oracle_patch_labels_raw(&canvas.mask, &grid, spec.min_defect_pixels).contains(&1) {
            if attempts < 8 {
                canvas.defect(spec.style_mix, &mut rng);
            } else {
                let cx = rng.random_range(16.0..(spec.width as f32 - 16.0).max(17.0));
                let cy = rng.random_range(16.0..(spec.height as f32 - 16.0).max(17.0));
                canvas.pothole_at(cx, cy, 12.0, &mut rng);
            }
            attempts += 1;
        }
    }

    Ok(canvas.finish(&mut rng))
}

struct Canvas {
    w: usize,
    h: usize,
    base: f32,
    field: Vec<f32>,
    mask: Raster,
}

impl Canvas {
    fn background(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Self {
        let base = rng.random_range(95.0f32..145.0);
        let fine = Normal::new(0.0f32, 7.0).unwrap();

        // Coarse value noise on a 16 px lattice for aggregate texture.
        let cell = 16usize;
        let (gw, gh) = (w / cell + 2, h / cell + 2);
        let lattice: Vec<f32> = (0..gw * gh).map(|_| rng.random_range(-10.0f32..10.0)).collect();
        let mut field = vec![0.0f32; w * h];
        for y in 0..h {
            let fy = y as f32 / cell as f32;
            let (gy, ty) = (fy as usize, fy - libm::floorf(fy));
            for x in 0..w {
                let fx = x as f32 / cell as f32;
                let (gx, tx) = (fx as usize, fx - libm::floorf(fx));
                let l = |i: usize, j: usize| lattice[j * gw + i];
                let coarse = (l(gx, gy) * (1.0 - tx) + l(gx + 1, gy) * tx) * (1.0 - ty)
                    + (l(gx, gy + 1) * (1.0 - tx) + l(gx + 1, gy + 1) * tx) * ty;
                let mut v = base + coarse + fine.sample(rng);
                // Isolated aggregate grains.
                if rng.random::<f32>() < 0.01 {
                    v += rng.random_range(-25.0f32..25.0);
                }
                field[y * w + x] = v;
            }
        }
        Canvas { w, h, base, field, mask: Raster::new(w, h, 1) }
    }

    fn lane_marking(&mut self, rng: &mut ChaCha8Rng) {
        let vertical = rng.random::<bool>();
        let width = rng.random_range(6usize..13);
        let span = if vertical { self.w } else { self.h };
        let start = rng.random_range(0..span.saturating_sub(width).max(1));
        let boost = rng.random_range(60.0f32..90.0);
        let dashed = rng.random::<bool>();
        for y in 0..self.h {
            for x in 0..self.w {
                let (across, along) = if vertical { (x, y) } else { (y, x) };
                if across >= start && across < start + width && (!dashed || (along / 48) % 2 == 0) {
                    self.field[y * self.w + x] += boost;
                }
            }
        }
    }

    /// Large low-contrast dark blotch.
    fn stain(&mut self, rng: &mut ChaCha8Rng) {
        let cx = rng.random_range(0.0..self.w as f32);
        let cy = rng.random_range(0.0..self.h as f32);
        let r = rng.random_range(20.0f32..45.0);
        let depth = rng.random_range(8.0f32..18.0);
        for y in 0..self.h {
            for x in 0..self.w {
                let (dx, dy) = (x as f32 - cx, y as f32 - cy);
                let d2 = (dx * dx + dy * dy) / (r * r);
                if d2 < 4.0 {
                    self.field[y * self.w + x] -= depth * libm::expf(-d2);
                }
            }
        }
    }

    fn defect(&mut self, mix: DefectStyleMix, rng: &mut ChaCha8Rng) {
        let total = mix.crack + mix.pothole + mix.repair;
        let u = rng.random::<f64>() * total;
        if u < mix.crack {
            self.crack(rng);
        } else if u < mix.crack + mix.pothole {
            let cx = rng.random_range(10.0..self.w as f32 - 10.0);
            let cy = rng.random_range(10.0..self.h as f32 - 10.0);
            let r = rng.random_range(9.0f32..20.0);
            self.pothole_at(cx, cy, r, rng);
        } else {
            self.repair(rng);
        }
    }

    /// Darkens a disc of `radius` at every sample along a path; `coverage`
    /// keeps the strongest stamp per pixel so overlaps do not compound.
    fn stroke(&mut self, points: &[(f32, f32)], radius: f32, darkness: f32) {
        let mut coverage = vec![0.0f32; self.w * self.h];
        for &(px, py) in points {
            let x0 = libm::floorf(px - radius - 1.0).max(0.0) as usize;
            let y0 = libm::floorf(py - radius - 1.0).max(0.0) as usize;
            let x1 = (libm::ceilf(px + radius + 1.0) as usize).min(self.w - 1);
            let y1 = (libm::ceilf(py + radius + 1.0) as usize).min(self.h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let (dx, dy) = (x as f32 - px, y as f32 - py);
                    let d = libm::sqrtf(dx * dx + dy * dy);
                    let c = (radius + 0.5 - d).clamp(0.0, 1.0);
                    let slot = &mut coverage[y * self.w + x];
                    if c > *slot {
                        *slot = c;
                    }
                }
            }
        }
        for (i, c) in coverage.into_iter().enumerate() {
            if c > 0.0 {
                self.field[i] -= darkness * c;
                if c >= 0.5 {
                    self.mask.as_mut_slice()[i] = 1;
                }
            }
        }
    }

    fn walk(&self, rng: &mut ChaCha8Rng, mut x: f32, mut y: f32, segments: usize) -> Vec<(f32, f32)> {
        let turn = Normal::new(0.0f32, 0.35).unwrap();
        let mut angle = rng.random_range(0.0..2.0 * PI);
        let mut points = vec![(x, y)];
        for _ in 0..segments {
            angle += turn.sample(rng);
            let len = rng.random_range(8.0f32..18.0);
            let steps = (len * 2.0) as usize;
            for _ in 0..steps {
                x += 0.5 * libm::cosf(angle);
                y += 0.5 * libm::sinf(angle);
                if x < 0.0 || y < 0.0 || x > (self.w - 1) as f32 || y > (self.h - 1) as f32 {
                    return points;
                }
                points.push((x, y));
            }
        }
        points
    }

    fn crack(&mut self, rng: &mut ChaCha8Rng) {
        let x = rng.random_range(0.0..self.w as f32);
        let y = rng.random_range(0.0..self.h as f32);
        let segments = rng.random_range(8usize..17);
        let mut points = self.walk(rng, x, y, segments);
        if rng.random::<f64>() < 0.4 && points.len() > 2 {
            let (bx, by) = points[rng.random_range(0..points.len())];
            let branch_len = rng.random_range(3usize..8);
            let branch = self.walk(rng, bx, by, branch_len);
            points.extend(branch);
        }
        let radius = rng.random_range(0.8f32..1.8);
        let darkness = rng.random_range(45.0f32..80.0);
        self.stroke(&points, radius, darkness);
    }

    fn pothole_at(&mut self, cx: f32, cy: f32, radius: f32, rng: &mut ChaCha8Rng) {
        let (a, b) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
        let darkness = rng.random_range(40.0f32..70.0);
        let grit = Normal::new(0.0f32, 12.0).unwrap();
        let reach = radius * 1.4 + 2.0;
        let x0 = (cx - reach).max(0.0) as usize;
        let y0 = (cy - reach).max(0.0) as usize;
        let x1 = ((cx + reach) as usize).min(self.w - 1);
        let y1 = ((cy + reach) as usize).min(self.h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = (x as f32 - cx, y as f32 - cy);
                let phi = libm::atan2f(dy, dx);
                let edge = radius * (1.0 + 0.2 * libm::sinf(2.0 * phi + a) + 0.1 * libm::sinf(3.0 * phi + b));
                let c = (edge + 0.5 - libm::sqrtf(dx * dx + dy * dy)).clamp(0.0, 1.0);
                if c > 0.0 {
                    let i = y * self.w + x;
                    self.field[i] -= c * (darkness + grit.sample(rng));
                    if c >= 0.5 {
                        self.mask.as_mut_slice()[i] = 1;
                    }
                }
            }
        }
    }

    /// Rectangular patch of smoother, differently toned asphalt with a dark seam.
    fn repair(&mut self, rng: &mut ChaCha8Rng) {
        let rw = rng.random_range(30usize..71).min(self.w);
        let rh = rng.random_range(24usize..57).min(self.h);
        let x0 = rng.random_range(0..=self.w - rw);
        let y0 = rng.random_range(0..=self.h - rh);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let tone = self.base + sign * rng.random_range(25.0f32..45.0);
        let fine = Normal::new(0.0f32, 3.0).unwrap();
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                let border = x < x0 + 2 || x >= x0 + rw - 2 || y < y0 + 2 || y >= y0 + rh - 2;
                let i = y * self.w + x;
                self.field[i] = if border { tone - 40.0 } else { tone + fine.sample(rng) };
                self.mask.as_mut_slice()[i] = 1;
            }
        }
    }

    fn finish(self, rng: &mut ChaCha8Rng) -> (Raster, Raster) {
        let gx = rng.random_range(-0.6f32..0.6);
        let gy = rng.random_range(-0.6f32..0.6);
        let offset = rng.random_range(-20.0f32..20.0);
        let (w, h) = (self.w, self.h);
        let image = Raster::from_fn(w, h, |x, y| {
            let gain = 1.0 + gx * (x as f32 / w as f32 - 0.5) + gy * (y as f32 / h as f32 - 0.5);
            libm::roundf(self.field[y * w + x] * gain + offset).clamp(0.0, 255.0) as u8
        });
        (image, self.mask)
    }
}

fn oracle_patch_labels_raw(mask: &Raster, grid: &PatchGrid, min_defect_pixels: usize) -> Vec<u8> {
    (0..grid.m())
        .map(|t| {
            let (x0, y0) = grid.origin(t);
            let mut count = 0;
            for y in y0..y0 + grid.patch_size {
                let row = &mask.as_slice()[y * mask.width() + x0..y * mask.width() + x0 + grid.patch_size];
                count += row.iter().filter(|&&v| v != 0).count();
            }
            u8::from(count >= min_defect_pixels)
        })
        .collect()
}

/// Patch `t` is diseased iff it holds at least `min_defect_pixels` mask pixels.
pub fn oracle_patch_labels(mask: &DefectMask, grid: &PatchGrid, min_defect_pixels: usize) -> Result<Vec<u8>> {
    let m = &mask.mask;
    if m.channels() != 1 || m.width() != grid.width() || m.height() != grid.height() {
        return Err(Error::mismatch(
            format!("{}x{} single-channel mask", grid.width(), grid.height()),
            format!("{}x{}x{}", m.width(), m.height(), m.channels()),
        ));
    }
    Ok(oracle_patch_labels_raw(m, grid, min_defect_pixels))
}

/// Exactly `round(ratio * pixel_count)` distinct positions, uniformly drawn.
pub fn select_noise_positions(pixel_count: usize, ratio: f64, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!("noise ratio must lie in [0,1], got {ratio}")));
    }
    let k = (libm::round(ratio * pixel_count as f64) as usize).min(pixel_count);
    Ok(rand::seq::index::sample(rng, pixel_count, k).into_vec())
}

/// Adds zero-mean Gaussian noise (std `sigma * 255`) to a random `ratio` of the
/// pixel positions, clamping to `[0, 255]`.
pub fn corrupt_raster(image: &Raster, ratio: f64, sigma: f64, noise_seed: u64) -> Result<Raster> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("noise sigma must be > 0, got {sigma}")));
    }
    let mut rng = seed::rng(noise_seed, 0x006e_6f69_7365, 0);
    let positions = select_noise_positions(image.pixel_count(), ratio, &mut rng)?;
    let normal = Normal::new(0.0, sigma * 255.0).map_err(|e| Error::InvalidArgument(format!("{e}")))?;
    let mut out = image.clone();
    let c = image.channels();
    let data = out.as_mut_slice();
    for p in positions {
        for ch in 0..c {
            let v = &mut data[p * c + ch];
            *v = libm::round(f64::from(*v) + normal.sample(&mut rng)).clamp(0.0, 255.0) as u8;
        }
    }
    Ok(out)
}

pub fn corrupt_with_noise(image: &ImageRecord, ratio: f64, sigma: f64, noise_seed: u64) -> Result<ImageRecord> {
    Ok(ImageRecord { pixels: corrupt_raster(&image.pixels, ratio, sigma, noise_seed)?, ..image.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn small_spec() -> GenerationSpec {
        GenerationSpec { n_train_pos: 4, n_train_neg: 3, n_test_pos: 2, n_test_neg: 2, seed: 7, ..Default::default() }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_corpus(&small_spec()).unwrap();
        let b = generate_corpus(&small_spec()).unwrap();
        assert_eq!(a, b);
        let c = generate_corpus(&GenerationSpec { seed: 8, ..small_spec() }).unwrap();
        assert_ne!(a.records[0].pixels, c.records[0].pixels);
    }

    #[test]
    fn only_negatives_gives_empty_masks() {
        let spec = GenerationSpec { n_train_pos: 0, n_test_pos: 0, ..small_spec() };
        let corpus = generate_corpus(&spec).unwrap();
        assert!(corpus.records.iter().all(|r| r.label == 0));
        assert!(corpus.masks.iter().all(|m| m.defect_pixels() == 0));
    }

    #[test]
    fn counts_splits_and_ids() {
        let corpus = generate_corpus(&small_spec()).unwrap();
        let train: Vec<_> = corpus.records.iter().filter(|r| r.split == Split::Train).collect();
        assert_eq!(train.len(), 7);
        assert_eq!(train.iter().filter(|r| r.label == 1).count(), 4);
        let mut ids: Vec<_> = corpus.records.iter().map(|r| r.id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), corpus.records.len());
    }

    #[test]
    fn bad_geometry_is_a_config_error() {
        let spec = GenerationSpec { width: 250, ..small_spec() };
        assert!(matches!(generate_corpus(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn oracle_edge_cases() {
        let grid = PatchGrid::for_dims(256, 192, 64).unwrap();
        let zero = DefectMask { image_id: "z".into(), mask: Raster::new(256, 192, 1) };
        assert_eq!(oracle_patch_labels(&zero, &grid, 25).unwrap(), vec![0; 12]);
        let full = DefectMask { image_id: "f".into(), mask: Raster::filled(256, 192, 1, 1) };
        assert_eq!(oracle_patch_labels(&full, &grid, 1).unwrap(), vec![1; 12]);

        // A 10-pixel crack inside patch (row 0, col 2).
        let mut m = Raster::new(256, 192, 1);
        for i in 0..10 {
            m.set(140 + i, 20 + i / 3, 0, 1);
        }
        let crack = DefectMask { image_id: "c".into(), mask: m };
        let labels = oracle_patch_labels(&crack, &grid, 5).unwrap();
        let expected: Vec<u8> = (0..12).map(|t| u8::from(t == 2)).collect();
        assert_eq!(labels, expected);
        assert_eq!(oracle_patch_labels(&crack, &grid, 11).unwrap(), vec![0; 12]);

        let wrong = PatchGrid::for_dims(128, 128, 64).unwrap();
        assert!(oracle_patch_labels(&crack, &wrong, 5).is_err());
    }

    #[test]
    fn noise_selection_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let picks = select_noise_positions(10_000, 0.1, &mut rng).unwrap();
        assert_eq!(picks.len(), 1000);
        let mut sorted = picks.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 1000);
        assert_eq!(select_noise_positions(10_000, 1.0, &mut rng).unwrap().len(), 10_000);
        assert!(select_noise_positions(10, 1.5, &mut rng).is_err());
        assert!(select_noise_positions(10, -0.1, &mut rng).is_err());
    }

    #[test]
    fn corruption_contract() {
        let img = Raster::from_fn(100, 100, |x, y| ((x + y) % 200 + 20) as u8);
        assert_eq!(corrupt_raster(&img, 0.0, 0.2, 5).unwrap(), img);
        let noisy = corrupt_raster(&img, 0.1, 0.2, 5).unwrap();
        assert_eq!(noisy, corrupt_raster(&img, 0.1, 0.2, 5).unwrap());
        let changed = img.as_slice().iter().zip(noisy.as_slice()).filter(|(a, b)| a != b).count();
        assert!(changed <= 1000 && changed > 800, "{changed}");
        assert!(corrupt_raster(&img, 0.1, 0.0, 5).is_err());
        assert!(corrupt_raster(&img, 1.1, 0.2, 5).is_err());
    }
}
