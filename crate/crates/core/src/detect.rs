//! Image-level detection by max-pooling patch confidences, threshold
//! screening, and patch-level localization output.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::corpus::ImageRecord;
use crate::plin::PatchScorer;
use crate::preprocess::{equalize, partition, PatchGrid, PreprocessConfig};
use crate::{Error, Raster, Result};

/// Default decision threshold. Screening usually wants a lower one so that
/// fewer diseased images are filtered out.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Detection {
    pub image_id: String,
    pub grid: PatchGrid,
    pub threshold: f64,
    /// Maximum patch score.
    pub image_score: f64,
    pub decision: bool,
    pub patch_scores: Vec<f64>,
    pub patch_labels: Vec<u8>,
}

impl Detection {
    /// Pools per-patch scores: the image score is their maximum and a patch
    /// (or the image) is flagged when its score exceeds `threshold`.
    pub fn from_scores(image_id: &str, grid: PatchGrid, patch_scores: Vec<f64>, threshold: f64) -> Result<Self> {
        if patch_scores.len() != grid.m() {
            return Err(Error::mismatch(format!("{} patch scores", grid.m()), patch_scores.len()));
        }
        let image_score = patch_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let patch_labels = patch_scores.iter().map(|&s| u8::from(s > threshold)).collect();
        Ok(Detection {
            image_id: image_id.into(),
            grid,
            threshold,
            image_score,
            decision: image_score > threshold,
            patch_scores,
            patch_labels,
        })
    }

    pub fn flagged(&self) -> impl Iterator<Item = usize> + '_ {
        self.patch_labels.iter().enumerate().filter(|(_, &l)| l == 1).map(|(t, _)| t)
    }
}

/// Equalizes, partitions and scores one image.
pub fn detect_image<S: PatchScorer + ?Sized>(
    scorer: &S,
    image_id: &str,
    image: &Raster,
    preprocess: &PreprocessConfig,
    threshold: f64,
) -> Result<Detection> {
    let patch_size = scorer.input_size();
    let grid = PatchGrid::for_image(image, patch_size)?;
    let patches = partition(&equalize(image, preprocess), &grid)?;
    Detection::from_scores(image_id, grid, scorer.score_patches(&patches)?, threshold)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScreeningEntry {
    pub image_id: String,
    pub score: f64,
    pub true_label: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScreeningReport {
    pub threshold: f64,
    /// Score above the threshold: passed on for inspection.
    pub kept: Vec<ScreeningEntry>,
    pub filtered: Vec<ScreeningEntry>,
}

impl ScreeningReport {
    pub fn kept_fraction(&self) -> f64 {
        let total = self.kept.len() + self.filtered.len();
        if total == 0 {
            0.0
        } else {
            self.kept.len() as f64 / total as f64
        }
    }

    /// Share of labeled diseased images that were kept.
    pub fn disease_recall(&self) -> Option<f64> {
        let kept = self.kept.iter().filter(|e| e.true_label == Some(1)).count();
        let all = kept + self.filtered.iter().filter(|e| e.true_label == Some(1)).count();
        (all > 0).then(|| kept as f64 / all as f64)
    }

    /// Share of labeled normal images that were filtered out.
    pub fn normal_filtered_fraction(&self) -> Option<f64> {
        let filtered = self.filtered.iter().filter(|e| e.true_label == Some(0)).count();
        let all = filtered + self.kept.iter().filter(|e| e.true_label == Some(0)).count();
        (all > 0).then(|| filtered as f64 / all as f64)
    }

    /// All entries in input order with their decision.
    pub fn rows(&self) -> Vec<(&ScreeningEntry, bool)> {
        let mut rows: Vec<_> = self.kept.iter().map(|e| (e, true)).chain(self.filtered.iter().map(|e| (e, false))).collect();
        rows.sort_by(|a, b| a.0.image_id.cmp(&b.0.image_id));
        rows
    }
}

/// Splits scored images into kept (`score > threshold`) and filtered.
pub fn screen_scores(entries: Vec<ScreeningEntry>, threshold: f64) -> Result<ScreeningReport> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold must lie in (0,1), got {threshold}")));
    }
    let (kept, filtered) = entries.into_iter().partition(|e| e.score > threshold);
    Ok(ScreeningReport { threshold, kept, filtered })
}

pub fn screen_batch<S: PatchScorer + ?Sized>(
    scorer: &S,
    images: &[ImageRecord],
    preprocess: &PreprocessConfig,
    threshold: f64,
) -> Result<ScreeningReport> {
    let entries = images
        .iter()
        .map(|r| {
            let d = detect_image(scorer, &r.id, &r.pixels, preprocess, threshold)?;
            Ok(ScreeningEntry { image_id: r.id.clone(), score: d.image_score, true_label: Some(r.label) })
        })
        .collect::<Result<Vec<_>>>()?;
    screen_scores(entries, threshold)
}

/// Legend cell height in pixels per grid row.
const LEGEND_ROW: usize = 8;

/// RGB overlay: the source image with flagged patches blended toward red,
/// above a legend strip that repeats the patch grid as cells shaded by score
/// (flagged cells in red).
pub fn render_overlay(detection: &Detection, image: &Raster) -> Result<Raster> {
    let grid = detection.grid;
    if image.width() != grid.width() || image.height() != grid.height() {
        return Err(Error::mismatch(
            format!("{}x{} image", grid.width(), grid.height()),
            format!("{}x{}", image.width(), image.height()),
        ));
    }
    if detection.patch_scores.len() != grid.m() || detection.patch_labels.len() != grid.m() {
        return Err(Error::mismatch(format!("{} patch entries", grid.m()), detection.patch_scores.len()));
    }
    let rgb = image.to_rgb();
    let (w, h) = (image.width(), image.height());
    let legend_h = grid.rows * LEGEND_ROW;
    let mut out = Raster::new(w, h + legend_h, 3);
    out.paste(&rgb, 0, 0)?;

    for t in detection.flagged() {
        let (x0, y0) = grid.origin(t);
        for y in y0..y0 + grid.patch_size {
            for x in x0..x0 + grid.patch_size {
                for c in 0..3 {
                    let v = u16::from(out.get(x, y, c));
                    let tinted = if c == 0 { (v + 255).div_ceil(2) } else { v / 2 };
                    out.set(x, y, c, tinted as u8);
                }
            }
        }
    }

    let cell_w = w / grid.cols;
    for t in 0..grid.m() {
        let (row, col) = grid.position(t);
        let level = libm::round(detection.patch_scores[t].clamp(0.0, 1.0) * 255.0) as u8;
        let color = if detection.patch_labels[t] == 1 { [level.max(64), 0, 0] } else { [level, level, level] };
        for y in h + row * LEGEND_ROW + 1..h + (row + 1) * LEGEND_ROW - 1 {
            for x in col * cell_w + 1..(col + 1) * cell_w - 1 {
                for (c, &v) in color.iter().enumerate() {
                    out.set(x, y, c, v);
                }
            }
        }
    }
    Ok(out)
}

/// Tab-separated per-patch map with header `t row col score label`.
pub fn score_map(detection: &Detection) -> String {
    let mut out = String::from("t\trow\tcol\tscore\tlabel\n");
    for (t, (&s, &l)) in detection.patch_scores.iter().zip(&detection.patch_labels).enumerate() {
        let (row, col) = detection.grid.position(t);
        let _ = writeln!(out, "{t}\t{row}\t{col}\t{s:.6}\t{l}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> PatchGrid {
        PatchGrid::for_dims(256, 192, 64).unwrap()
    }

    #[test]
    fn nothing_above_threshold() {
        let d = Detection::from_scores("a", grid(), alloc::vec![0.2; 12], 0.5).unwrap();
        assert!(!d.decision);
        assert_eq!(d.flagged().count(), 0);
        assert_eq!(d.image_score, 0.2);
    }

    #[test]
    fn single_hot_patch() {
        let mut s = alloc::vec![0.1; 12];
        s[7] = 0.99;
        let d = Detection::from_scores("a", grid(), s, 0.5).unwrap();
        assert!(d.decision);
        assert_eq!(d.flagged().collect::<Vec<_>>(), [7]);
        assert_eq!(d.image_score, 0.99);
    }

    #[test]
    fn overlay_marks_exactly_the_flagged_patches() {
        let img = Raster::from_fn(256, 192, |x, y| ((x * 3 + y) % 200 + 20) as u8);
        let scores: Vec<f64> = (0..12).map(|t| (t as f64 * 0.37) % 1.0).collect();
        let d = Detection::from_scores("a", grid(), scores.clone(), 0.5).unwrap();
        let overlay = render_overlay(&d, &img).unwrap();
        assert_eq!(overlay.height(), 192 + 3 * LEGEND_ROW);
        let g = grid();
        let tinted: Vec<usize> = (0..12)
            .filter(|&t| {
                let (x0, y0) = g.origin(t);
                (y0..y0 + 64).any(|y| (x0..x0 + 64).any(|x| overlay.get(x, y, 1) != img.get(x, y, 0)))
            })
            .collect();
        let expected: Vec<usize> = (0..12).filter(|&t| scores[t] > 0.5).collect();
        assert_eq!(tinted, expected);
    }

    #[test]
    fn unflagged_overlay_is_source_plus_legend() {
        let img = Raster::from_fn(256, 192, |x, y| ((x + y) % 256) as u8);
        let d = Detection::from_scores("a", grid(), alloc::vec![0.1; 12], 0.5).unwrap();
        let overlay = render_overlay(&d, &img).unwrap();
        assert_eq!(overlay.crop(0, 0, 256, 192).unwrap(), img.to_rgb());
        let all = Detection::from_scores("a", grid(), alloc::vec![0.9; 12], 0.5).unwrap();
        let overlay = render_overlay(&all, &img).unwrap();
        assert!((0..192).all(|y| (0..256).all(|x| overlay.get(x, y, 0) >= overlay.get(x, y, 1))));
    }

    #[test]
    fn score_map_lists_every_patch() {
        let d = Detection::from_scores("a", grid(), alloc::vec![0.25; 12], 0.5).unwrap();
        let map = score_map(&d);
        assert_eq!(map.lines().count(), 13);
        assert_eq!(map.lines().nth(6).unwrap(), "5\t1\t1\t0.250000\t0");
    }

    #[test]
    fn screening_partition_and_rates() {
        let entries: Vec<ScreeningEntry> = [(0.9, 1), (0.6, 0), (0.3, 1), (0.1, 0)]
            .iter()
            .enumerate()
            .map(|(i, &(s, l))| ScreeningEntry { image_id: format!("i{i}"), score: s, true_label: Some(l) })
            .collect();
        let r = screen_scores(entries.clone(), 0.5).unwrap();
        assert_eq!(r.kept.len(), 2);
        assert_eq!(r.disease_recall(), Some(0.5));
        assert_eq!(r.normal_filtered_fraction(), Some(0.5));
        let all = screen_scores(entries.clone(), 0.05).unwrap();
        assert_eq!(all.kept_fraction(), 1.0);
        assert!(screen_scores(entries, 1.0).is_err());
    }
}
