//! Prior-knowledge-biased cross-entropy.
//!
//! Each patch's binary cross-entropy term is weighted by its previous-round
//! confidence normalized by the previous diseased-patch ratio, `g_prev / s_prev`.
//! Confident patches get more attention in the next round.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

fn check_lengths(g_now: &[f64], labels: &[u8], other: usize) -> Result<()> {
    if g_now.is_empty() {
        return Err(Error::Empty("loss needs at least one item"));
    }
    if labels.len() != g_now.len() || other != g_now.len() {
        return Err(Error::mismatch(
            format!("{} labels and weights", g_now.len()),
            format!("{} labels, {} weights", labels.len(), other),
        ));
    }
    if let Some(&l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidArgument(format!("labels must be 0 or 1, got {l}")));
    }
    if let Some(&g) = g_now.iter().find(|&&g| !(g > 0.0 && g < 1.0)) {
        return Err(Error::InvalidArgument(format!("scores must lie strictly in (0,1), got {g}")));
    }
    Ok(())
}

/// Per-patch weights `g_prev / s_prev`.
pub fn pkbce_weights(g_prev: &[f64], s_prev: f64) -> Result<Vec<f64>> {
    if !(s_prev > 0.0) || !s_prev.is_finite() {
        return Err(Error::InvalidArgument(format!("s_prev must be > 0, got {s_prev}")));
    }
    Ok(g_prev.iter().map(|g| g / s_prev).collect())
}

/// `-(1/N) sum w [l log g + (1 - l) log(1 - g)]`.
pub fn weighted_bce(g_now: &[f64], labels: &[u8], weights: &[f64]) -> Result<f64> {
    check_lengths(g_now, labels, weights.len())?;
    let sum: f64 = g_now
        .iter()
        .zip(labels)
        .zip(weights)
        .map(|((&g, &l), &w)| {
            let term = if l == 1 { libm::log(g) } else { libm::log(1.0 - g) };
            if w == 0.0 {
                0.0
            } else {
                w * term
            }
        })
        .sum();
    Ok(-sum / g_now.len() as f64)
}

/// Unweighted binary cross-entropy.
pub fn bce_loss(g_now: &[f64], labels: &[u8]) -> Result<f64> {
    weighted_bce(g_now, labels, &alloc::vec![1.0; g_now.len()])
}

pub fn pkbce_loss(g_now: &[f64], labels: &[u8], g_prev: &[f64], s_prev: f64) -> Result<f64> {
    weighted_bce(g_now, labels, &pkbce_weights(g_prev, s_prev)?)
}

/// Analytic `dL/dg_now` of [`pkbce_loss`]:
/// `-(w/N) [l / g - (1 - l) / (1 - g)]`.
pub fn pkbce_grad(g_now: &[f64], labels: &[u8], g_prev: &[f64], s_prev: f64) -> Result<Vec<f64>> {
    let weights = pkbce_weights(g_prev, s_prev)?;
    check_lengths(g_now, labels, weights.len())?;
    let n = g_now.len() as f64;
    Ok(g_now
        .iter()
        .zip(labels)
        .zip(&weights)
        .map(|((&g, &l), &w)| {
            let inner = if l == 1 { 1.0 / g } else { -1.0 / (1.0 - g) };
            -w * inner / n
        })
        .collect())
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// The weighted cross-entropy evaluated on the logit margin `d` (so that
/// `g = sigmoid(d)`), returning the loss and `dL/dd = w (g - l) / N`. Stable for
/// saturated margins, where the probability form would take `log(0)`.
pub(crate) fn weighted_bce_on_margins(margins: &[f64], labels: &[u8], weights: &[f64]) -> (f64, Vec<f64>) {
    let n = margins.len() as f64;
    let mut loss = 0.0;
    let grads = margins
        .iter()
        .zip(labels)
        .zip(weights)
        .map(|((&d, &l), &w)| {
            if w != 0.0 {
                // -log g = softplus(-d); -log(1 - g) = softplus(d)
                loss += w * if l == 1 { softplus(-d) } else { softplus(d) };
            }
            w * (sigmoid(d) - f64::from(l)) / n
        })
        .collect();
    (loss / n, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_weights_reduce_to_bce() {
        let g = [0.8, 0.3, 0.55, 0.01];
        let l = [1, 0, 1, 0];
        let prev = [0.4; 4];
        let a = pkbce_loss(&g, &l, &prev, 0.4).unwrap();
        let b = bce_loss(&g, &l).unwrap();
        assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn zero_weights_zero_loss() {
        let g = [0.8, 0.3];
        assert_eq!(pkbce_loss(&g, &[1, 0], &[0.0, 0.0], 0.5).unwrap(), 0.0);
        assert!(pkbce_grad(&g, &[1, 0], &[0.0, 0.0], 0.5).unwrap().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn two_item_scalar_oracle() {
        // weights 0.6/0.5 = 1.2 and 0.2/0.5 = 0.4
        let want = -0.5 * (1.2 * libm::log(0.8) + 0.4 * libm::log(0.7));
        let got = pkbce_loss(&[0.8, 0.3], &[1, 0], &[0.6, 0.2], 0.5).unwrap();
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        assert!(got > 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(pkbce_loss(&[0.5], &[1], &[0.5], 0.0).is_err());
        assert!(pkbce_loss(&[0.5], &[1], &[0.5], -1.0).is_err());
        assert!(pkbce_loss(&[1.0], &[1], &[0.5], 0.5).is_err());
        assert!(pkbce_loss(&[0.5, 0.5], &[1], &[0.5, 0.5], 0.5).is_err());
        assert!(pkbce_loss(&[], &[], &[], 0.5).is_err());
        assert!(pkbce_loss(&[0.5], &[2], &[0.5], 0.5).is_err());
    }

    #[test]
    fn margin_form_agrees_with_probability_form() {
        let margins = [-3.0, -0.2, 0.7, 4.0];
        let labels = [0, 1, 1, 0];
        let weights = [1.3, 0.2, 0.9, 0.0];
        let g: Vec<f64> = margins.iter().map(|&d| sigmoid(d)).collect();
        let (loss, dd) = weighted_bce_on_margins(&margins, &labels, &weights);
        assert!((loss - weighted_bce(&g, &labels, &weights).unwrap()).abs() < 1e-12);
        // chain rule: dL/dd = dL/dg * g (1 - g) with unit s_prev
        let dg = pkbce_grad(&g, &labels, &weights, 1.0).unwrap();
        for i in 0..4 {
            assert!((dd[i] - dg[i] * g[i] * (1.0 - g[i])).abs() < 1e-12);
        }
    }
}
