//! Binary-classification metrics: precision/recall at a threshold, rank-sum
//! AUC with midranks, precision-recall curves, precision at a target recall,
//! and the noise-robustness sweep.
//!
//! Decisions are `score > threshold` everywhere except on PR-curve points,
//! whose `threshold` is an inclusive cutoff (`score >= threshold`): the lowest
//! score admitted at that operating point.

use alloc::format;
use alloc::vec::Vec;

use crate::corpus::{corrupt_raster, ImageRecord};
use crate::{seed, Error, Raster, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrecisionRecall {
    /// 1.0 with `precision_defined == false` when nothing is predicted positive.
    pub precision: f64,
    pub recall: f64,
    pub precision_defined: bool,
    pub counts: Counts,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrecisionAtRecall {
    pub target: f64,
    pub precision: f64,
    pub threshold: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub threshold: f64,
    pub at_threshold: PrecisionRecall,
    pub auc: f64,
    pub pr_curve: Vec<PrPoint>,
    pub p_at_r: Vec<PrecisionAtRecall>,
    /// (noise ratio, AUC) pairs; empty unless a sweep was run.
    pub robustness: Vec<(f64, f64)>,
}

fn validate(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Empty("metrics need at least one scored item"));
    }
    if scores.len() != labels.len() {
        return Err(Error::mismatch(format!("{} labels", scores.len()), labels.len()));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidArgument(format!("labels must be 0 or 1, got {l}")));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(format!("scores must be finite, got {s}")));
    }
    Ok(())
}

pub fn precision_recall(scores: &[f64], labels: &[u8], threshold: f64) -> Result<PrecisionRecall> {
    validate(scores, labels)?;
    let mut c = Counts::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s > threshold, l == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    let predicted = c.tp + c.fp;
    let positives = c.tp + c.fn_;
    Ok(PrecisionRecall {
        precision: if predicted == 0 { 1.0 } else { c.tp as f64 / predicted as f64 },
        recall: if positives == 0 { 0.0 } else { c.tp as f64 / positives as f64 },
        precision_defined: predicted > 0,
        counts: c,
    })
}

/// `(S_p - N_p (N_p + 1) / 2) / (N_p N_n)` where `S_p` sums the ascending
/// ranks of the positives; tied scores share their mean rank.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    validate(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass("AUC needs both positives and negatives"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j share their mean.
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * order[i..j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Operating points at every distinct score, from the highest cutoff down.
pub fn pr_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<PrPoint>> {
    validate(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let cutoff = scores[order[i]];
        while i < order.len() && scores[order[i]] == cutoff {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            recall: if n_pos == 0 { 0.0 } else { tp as f64 / n_pos as f64 },
            precision: tp as f64 / (tp + fp) as f64,
            threshold: cutoff,
        });
    }
    Ok(points)
}

/// Precision at the highest cutoff whose recall reaches `target` (no
/// interpolation between operating points).
pub fn precision_at_recall(scores: &[f64], labels: &[u8], target: f64) -> Result<PrecisionAtRecall> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::InvalidArgument(format!("target recall must lie in (0,1], got {target}")));
    }
    validate(scores, labels)?;
    if !labels.contains(&1) {
        return Err(Error::SingleClass("precision at recall needs positives"));
    }
    let curve = pr_curve(scores, labels)?;
    curve
        .iter()
        .find(|p| p.recall >= target - 1e-12)
        .map(|p| PrecisionAtRecall { target, precision: p.precision, threshold: p.threshold, recall: p.recall })
        .ok_or_else(|| Error::InvalidArgument(format!("recall {target} is not reachable")))
}

pub fn evaluate(scores: &[f64], labels: &[u8], threshold: f64, recall_targets: &[f64]) -> Result<EvalReport> {
    Ok(EvalReport {
        threshold,
        at_threshold: precision_recall(scores, labels, threshold)?,
        auc: auc(scores, labels)?,
        pr_curve: pr_curve(scores, labels)?,
        p_at_r: recall_targets.iter().map(|&t| precision_at_recall(scores, labels, t)).collect::<Result<_>>()?,
        robustness: Vec::new(),
    })
}

/// Noise seed for one image at one ratio; independent of evaluation order.
pub fn noise_seed(seed: u64, image_id: &str, ratio: f64) -> u64 {
    seed::derive(seed, seed::fnv1a(image_id.as_bytes()), ratio.to_bits())
}

/// For each noise ratio, corrupts every image and recomputes image-level AUC
/// from `score_image`. Ratio 0 leaves images untouched, so that entry equals
/// the clean AUC.
pub fn robustness_sweep<F>(
    images: &[ImageRecord],
    ratios: &[f64],
    sigma: f64,
    seed: u64,
    mut score_image: F,
) -> Result<Vec<(f64, f64)>>
where
    F: FnMut(&Raster) -> Result<f64>,
{
    let labels: Vec<u8> = images.iter().map(|r| r.label).collect();
    ratios
        .iter()
        .map(|&ratio| {
            let scores = images
                .iter()
                .map(|r| {
                    let noisy = corrupt_raster(&r.pixels, ratio, sigma, noise_seed(seed, &r.id, ratio))?;
                    score_image(&noisy)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((ratio, auc(&scores, &labels)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_precision_recall() {
        let pr = precision_recall(&[0.9, 0.6, 0.4, 0.2], &[1, 0, 1, 0], 0.5).unwrap();
        assert_eq!(pr.counts, Counts { tp: 1, fp: 1, fn_: 1, tn: 1 });
        assert_eq!((pr.precision, pr.recall), (0.5, 0.5));
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let s = [0.9, 0.8, 0.2, 0.1];
        let l = [1, 1, 0, 0];
        let pr = precision_recall(&s, &l, 0.5).unwrap();
        assert_eq!((pr.precision, pr.recall), (1.0, 1.0));
        let none = precision_recall(&s, &l, 0.95).unwrap();
        assert_eq!(none.recall, 0.0);
        assert!(!none.precision_defined);
        assert!(precision_recall(&[], &[], 0.5).is_err());
    }

    #[test]
    fn auc_edge_cases() {
        assert_eq!(auc(&[0.9, 0.8, 0.3, 0.1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.4; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.2], &[0, 1]).unwrap(), 1.0);
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass(_))));
    }

    #[test]
    fn precision_at_recall_hand_sweep() {
        let s = [0.9, 0.8, 0.7, 0.6];
        let l = [1, 1, 0, 1];
        let p = precision_at_recall(&s, &l, 0.9).unwrap();
        assert_eq!(p.precision, 0.75);
        assert_eq!(p.threshold, 0.6);
        let half = precision_at_recall(&s, &l, 0.5).unwrap();
        assert_eq!((half.precision, half.threshold), (1.0, 0.8));
        assert!(precision_at_recall(&s, &[0, 0, 0, 0], 0.5).is_err());
        assert!(precision_at_recall(&s, &l, 0.0).is_err());
    }

    #[test]
    fn full_recall_admits_negatives_above_lowest_positive() {
        let s = [0.95, 0.9, 0.7, 0.5, 0.4, 0.3, 0.2];
        let l = [1, 0, 1, 0, 1, 0, 0];
        let p = precision_at_recall(&s, &l, 1.0).unwrap();
        assert_eq!(p.threshold, 0.4);
        // 3 positives, negatives with score >= 0.4: 0.9 and 0.5
        assert_eq!(p.precision, 3.0 / 5.0);
    }

    #[test]
    fn pr_curve_recall_grows_as_cutoff_falls() {
        let s = [0.3, 0.9, 0.9, 0.5, 0.1];
        let l = [1, 0, 1, 1, 0];
        let c = pr_curve(&s, &l).unwrap();
        assert_eq!(c.len(), 4);
        assert!(c.windows(2).all(|w| w[0].threshold > w[1].threshold && w[0].recall <= w[1].recall));
        assert_eq!(c.last().unwrap().recall, 1.0);
    }
}
