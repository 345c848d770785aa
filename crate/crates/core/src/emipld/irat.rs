use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Size of the per-image rank quota: `max(1, floor(r * m))`.
///
/// The small epsilon keeps products such as `0.57 * 100` from rounding down
/// through floating-point error.
pub fn top_k(r: f64, m: usize) -> usize {
    (libm::floor(r * m as f64 + 1e-9) as usize).clamp(1, m.max(1))
}

/// Relabels the patches of one diseased image.
///
/// Patch `t` becomes diseased iff its score exceeds the global ratio `s_prev`
/// or it is among the `top_k(r, m)` highest scores of the image (ties go to the
/// lower patch index). The quota is inclusive, so every diseased image keeps at
/// least one diseased patch.
pub fn irat_update(scores: &[f64], image_label: u8, s_prev: f64, r: f64) -> Result<Vec<u8>> {
    if image_label != 1 {
        return Err(Error::Contract(format!(
            "relabeling applies to diseased images only (image label {image_label}); normal patches stay 0"
        )));
    }
    if scores.is_empty() {
        return Err(Error::Empty("image has no patches"));
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidArgument(format!("r must lie in (0,1], got {r}")));
    }
    if let Some(g) = scores.iter().find(|g| !g.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite score {g}")));
    }
    let k = top_k(r, scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort keeps lower indices first among equal scores.
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut labels = vec![0u8; scores.len()];
    for &t in &order[..k] {
        labels[t] = 1;
    }
    for (label, &g) in labels.iter_mut().zip(scores) {
        if g > s_prev {
            *label = 1;
        }
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quota_for_twelve_patches() {
        assert_eq!(top_k(0.45, 12), 5);
        assert_eq!(top_k(0.45, 1), 1);
        assert_eq!(top_k(0.45, 2), 1);
        assert_eq!(top_k(0.57, 100), 57);
        assert_eq!(top_k(1.0, 7), 7);
    }

    #[test]
    fn descending_scores_keep_the_top_five() {
        let scores = [0.9, 0.8, 0.7, 0.6, 0.55, 0.4, 0.35, 0.3, 0.25, 0.2, 0.15, 0.1];
        let labels = irat_update(&scores, 1, 0.5, 0.45).unwrap();
        assert_eq!(labels, [1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn high_scores_all_pass_the_global_ratio() {
        assert_eq!(irat_update(&[0.99; 12], 1, 0.5, 0.45).unwrap(), [1; 12]);
    }

    #[test]
    fn low_scores_still_keep_the_quota() {
        let labels = irat_update(&[0.01; 12], 1, 0.5, 0.45).unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 5);
        // ties: the five lowest indices
        assert_eq!(&labels[..6], &[1, 1, 1, 1, 1, 0]);
    }

    #[test]
    fn normal_images_are_rejected() {
        assert!(matches!(irat_update(&[0.9, 0.1], 0, 0.5, 0.45), Err(Error::Contract(_))));
    }

    #[test]
    fn single_patch_is_always_diseased() {
        assert_eq!(irat_update(&[0.001], 1, 0.9, 0.45).unwrap(), [1]);
    }
}
