use ioplin_core::emipld::{bce_loss, irat_update, pkbce_grad, pkbce_loss, top_k};
use ioplin_core::metrics::{auc, pr_curve, precision_at_recall};
use ioplin_core::preprocess::{equalize, partition, reassemble, EqualizeMode, PatchGrid, PreprocessConfig};
use ioplin_core::Raster;
use proptest::prelude::*;

/// Labels by explicit rank counting: patch t is in the top k when fewer than k
/// patches outrank it (higher score, or equal score at a lower index).
fn irat_oracle(scores: &[f64], s_prev: f64, r: f64) -> Vec<u8> {
    let m = scores.len();
    let k = ((r * m as f64 + 1e-9).floor() as usize).max(1);
    (0..m)
        .map(|t| {
            let ahead = (0..m).filter(|&u| scores[u] > scores[t] || (scores[u] == scores[t] && u < t)).count();
            u8::from(scores[t] > s_prev || ahead < k)
        })
        .collect()
}

fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Scores drawn from a coarse grid half of the time so ties are common.
fn score_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![
        (1u32..10).prop_map(|v| f64::from(v) / 10.0),
        0.001f64..0.999,
    ]
}

fn scored_set(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..=max).prop_flat_map(|n| {
        (prop::collection::vec(score_strategy(), n), prop::collection::vec(0u8..=1, n)).prop_filter(
            "both classes present",
            |(_, l)| l.contains(&0) && l.contains(&1),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1500))]

    #[test]
    fn irat_matches_rank_count_oracle(
        scores in (1usize..=16).prop_flat_map(|m| prop::collection::vec(score_strategy(), m)),
        s_prev in 0.01f64..0.99,
    ) {
        let got = irat_update(&scores, 1, s_prev, 0.45).unwrap();
        prop_assert_eq!(&got, &irat_oracle(&scores, s_prev, 0.45));
        prop_assert!(got.contains(&1));
        prop_assert!(got.iter().filter(|&&l| l == 1).count() >= top_k(0.45, scores.len()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn raising_a_score_never_drops_its_label(
        scores in (1usize..=16).prop_flat_map(|m| prop::collection::vec(0.01f64..0.99, m)),
        s_prev in 0.01f64..0.99,
        pick in any::<prop::sample::Index>(),
        bump in 0.0f64..0.5,
    ) {
        let t = pick.index(scores.len());
        let before = irat_update(&scores, 1, s_prev, 0.45).unwrap();
        let mut raised = scores.clone();
        raised[t] = (raised[t] + bump).min(0.999);
        let after = irat_update(&raised, 1, s_prev, 0.45).unwrap();
        prop_assert!(after[t] >= before[t]);
    }

    #[test]
    fn pkbce_gradient_matches_central_differences(
        items in prop::collection::vec((0.05f64..0.95, 0u8..=1, 0.0f64..1.0), 1..20),
        s_prev in 0.05f64..1.0,
    ) {
        let g: Vec<f64> = items.iter().map(|i| i.0).collect();
        let l: Vec<u8> = items.iter().map(|i| i.1).collect();
        let prev: Vec<f64> = items.iter().map(|i| i.2).collect();
        let grad = pkbce_grad(&g, &l, &prev, s_prev).unwrap();
        let h = 1e-6;
        for t in 0..g.len() {
            let mut plus = g.clone();
            plus[t] += h;
            let mut minus = g.clone();
            minus[t] -= h;
            let fd = (pkbce_loss(&plus, &l, &prev, s_prev).unwrap() - pkbce_loss(&minus, &l, &prev, s_prev).unwrap()) / (2.0 * h);
            let scale = fd.abs().max(grad[t].abs());
            if scale > 1e-8 {
                prop_assert!((fd - grad[t]).abs() / scale <= 1e-4, "t={} fd={} analytic={}", t, fd, grad[t]);
            }
        }
    }

    #[test]
    fn unit_weights_reduce_to_plain_bce(
        items in prop::collection::vec((0.001f64..0.999, 0u8..=1), 1..50),
        s_prev in 0.01f64..1.0,
    ) {
        let g: Vec<f64> = items.iter().map(|i| i.0).collect();
        let l: Vec<u8> = items.iter().map(|i| i.1).collect();
        let prev = vec![s_prev; g.len()];
        let a = pkbce_loss(&g, &l, &prev, s_prev).unwrap();
        let b = bce_loss(&g, &l).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert_eq!(pkbce_loss(&g, &l, &vec![0.0; g.len()], s_prev).unwrap(), 0.0);
    }

    #[test]
    fn rank_auc_equals_pairwise_oracle((scores, labels) in scored_set(200)) {
        let a = auc(&scores, &labels).unwrap();
        prop_assert!((a - pairwise_auc(&scores, &labels)).abs() <= 1e-9);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn auc_is_invariant_under_increasing_transforms((scores, labels) in scored_set(100)) {
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&warped, &labels).unwrap());
    }

    #[test]
    fn precision_at_recall_matches_threshold_sweep(
        (scores, labels) in scored_set(60),
        target in 0.05f64..=1.0,
    ) {
        let got = precision_at_recall(&scores, &labels, target).unwrap();
        // Direct sweep: the largest score cutoff (inclusive) with enough recall.
        let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
        let mut cutoffs = scores.clone();
        cutoffs.sort_by(|a, b| b.total_cmp(a));
        cutoffs.dedup();
        let (th, prec) = cutoffs
            .iter()
            .find_map(|&c| {
                let tp = scores.iter().zip(&labels).filter(|(&s, &l)| s >= c && l == 1).count() as f64;
                let all = scores.iter().filter(|&&s| s >= c).count() as f64;
                (tp / n_pos >= target - 1e-12).then_some((c, tp / all))
            })
            .unwrap();
        prop_assert_eq!(got.threshold, th);
        prop_assert!((got.precision - prec).abs() < 1e-12);
    }

    #[test]
    fn precision_at_higher_recall_is_weakly_lower(
        (scores, labels) in scored_set(80),
        lo in 0.05f64..1.0,
        extra in 0.0f64..1.0,
    ) {
        let hi = lo + (1.0 - lo) * extra;
        let curve = pr_curve(&scores, &labels).unwrap();
        let best_lo = curve.iter().filter(|p| p.recall >= lo - 1e-12).map(|p| p.precision).fold(0.0, f64::max);
        let at_hi = precision_at_recall(&scores, &labels, hi).unwrap();
        prop_assert!(at_hi.precision <= best_lo + 1e-12);
        prop_assert!(at_hi.recall >= hi - 1e-12);
    }

    #[test]
    fn partition_round_trips(rows in 1usize..4, cols in 1usize..5, side in 1usize..12, channels in prop_oneof![Just(1usize), Just(3usize)], salt in any::<u8>()) {
        let (w, h) = (cols * side, rows * side);
        let mut img = Raster::new(w, h, channels);
        for (i, v) in img.as_mut_slice().iter_mut().enumerate() {
            *v = (i as u8).wrapping_mul(31).wrapping_add(salt);
        }
        let grid = PatchGrid::for_image(&img, side).unwrap();
        prop_assert_eq!(grid.m(), rows * cols);
        let patches = partition(&img, &grid).unwrap();
        prop_assert_eq!(patches.len(), grid.m());
        prop_assert_eq!(reassemble(&patches, &grid).unwrap(), img);
    }

    #[test]
    fn equalization_preserves_shape(
        w in 1usize..40,
        h in 1usize..40,
        channels in prop_oneof![Just(1usize), Just(3usize)],
        salt in any::<u64>(),
        clip in 0.5f64..8.0,
    ) {
        let mut state = salt | 1;
        let mut img = Raster::new(w, h, channels);
        for v in img.as_mut_slice() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            *v = (state >> 40) as u8;
        }
        for mode in [EqualizeMode::None, EqualizeMode::RegularHe, EqualizeMode::Clahe] {
            let out = equalize(&img, &PreprocessConfig { mode, clip_limit: clip, ..Default::default() });
            prop_assert_eq!((out.width(), out.height(), out.channels()), (w, h, channels));
        }
    }
}

#[test]
fn irat_spec_examples() {
    let mut scores = vec![0.9, 0.8, 0.7, 0.6, 0.55, 0.4, 0.35, 0.3, 0.25, 0.2, 0.15, 0.1];
    assert_eq!(top_k(0.45, 12), 5);
    assert_eq!(irat_update(&scores, 1, 0.5, 0.45).unwrap(), [1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0]);
    scores.fill(0.99);
    assert_eq!(irat_update(&scores, 1, 0.5, 0.45).unwrap(), [1; 12]);
    scores.fill(0.01);
    assert_eq!(irat_update(&scores, 1, 0.5, 0.45).unwrap().iter().filter(|&&l| l == 1).count(), 5);
    assert!(irat_update(&scores, 0, 0.5, 0.45).is_err());
}

#[test]
fn pkbce_scalar_example() {
    let loss = pkbce_loss(&[0.8, 0.3], &[1, 0], &[0.6, 0.2], 0.5).unwrap();
    let expected = -0.5 * (1.2 * 0.8f64.ln() + 0.4 * 0.7f64.ln());
    assert!((loss - expected).abs() < 1e-15);
    assert!(pkbce_loss(&[0.8], &[1], &[0.6], 0.0).is_err());
}

#[test]
fn auc_edge_cases() {
    assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap(), 1.0);
    assert_eq!(auc(&[0.4; 6], &[1, 0, 1, 0, 1, 0]).unwrap(), 0.5);
    assert!(auc(&[0.4, 0.5], &[1, 1]).is_err());
}

#[test]
fn precision_at_recall_hand_sweep() {
    let p = precision_at_recall(&[0.9, 0.8, 0.7, 0.6], &[1, 1, 0, 1], 0.9).unwrap();
    assert_eq!(p.threshold, 0.6);
    assert_eq!(p.precision, 0.75);
}
