//! Brute-force oracles checked against the implementation.

use std::collections::BTreeMap;

use gapk::metrics::{self, ScoredSample};
use gapk::records::{Label, SampleRecord, TokenStats};
use gapk::scoring::{self, bottom_k_mean, delta_scores, gap_scores, z_scores};
use gapk::synth::{emit_records, ToyLm};
use gapk::Corpus;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Statistics of an explicit distribution by direct summation.
fn brute_stats(p: &[f64], target: usize) -> [f64; 4] {
    let logs: Vec<f64> = p.iter().map(|x| x.ln()).collect();
    let top1 = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean: f64 = p.iter().zip(&logs).map(|(a, b)| a * b).sum();
    let var: f64 = p
        .iter()
        .zip(&logs)
        .map(|(a, b)| a * (b - mean) * (b - mean))
        .sum();
    [logs[target], top1, mean, var.sqrt()]
}

fn single(tok: TokenStats<f64>) -> SampleRecord<f64> {
    SampleRecord {
        sample_id: "x".into(),
        label: None,
        text: None,
        tokens: vec![tok],
        neighbor_losses: None,
    }
}

// (0.7, 0.2, 0.1) with the p = 0.2 token observed, frozen from `brute_stats`.
const TARGET: f64 = -1.6094379124341003;
const TOP1: f64 = -0.35667494393873245;
const MEAN: f64 = -0.8018185525433372;
const STD: f64 = 0.7031264534810098;
const Z: f64 = -1.1486118263541842;
const G: f64 = -1.7817036498815255;
const DELTA: f64 = 0.6330918235273413;

#[test]
fn three_token_oracle_is_frozen_correctly() {
    let [t, top, mean, std] = brute_stats(&[0.7, 0.2, 0.1], 1);
    for (a, b) in [(t, TARGET), (top, TOP1), (mean, MEAN), (std, STD)] {
        assert!((a - b).abs() < 1e-15, "{a} vs {b}");
    }
    assert!(((t - mean) / std - Z).abs() < 1e-15);
    assert!(((t - top) / std - G).abs() < 1e-15);
    assert!(((top - mean) / std - DELTA).abs() < 1e-15);
    // Five-digit hand values agree to rounding.
    assert!((Z - -1.14865).abs() < 1e-4);
    assert!((G - -1.78168).abs() < 1e-4);
    assert!((DELTA - 0.63303).abs() < 1e-4);
}

#[test]
fn token_scores_match_three_token_oracle() {
    let s = single(TokenStats::new(TARGET, TOP1, MEAN, STD).unwrap());
    assert!((z_scores(&s, 1e-6)[0] - Z).abs() < 1e-12);
    assert!((gap_scores(&s, 1e-6)[0] - G).abs() < 1e-12);
    assert!((delta_scores(&s, 1e-6)[0] - DELTA).abs() < 1e-12);
    assert!((z_scores(&s, 1e-6)[0] - delta_scores(&s, 1e-6)[0] - G).abs() < 1e-12);

    let exact = TokenStats::from_distribution(&[0.7, 0.2, 0.1], 1);
    let s = single(exact);
    assert!((gap_scores(&s, 1e-6)[0] - G).abs() < 1e-12);
}

#[test]
fn toy_model_reproduces_three_token_statistics() {
    // alpha = 1 and counts (6, 1, 0) give (7, 2, 1) / 10.
    let mut lm = ToyLm::new(1, 3, 1.0);
    lm.counts.insert(vec![0], vec![6, 1, 0]);
    let corpus: Corpus<f64> = emit_records(&lm, &[vec![0, 1]], &[None]).unwrap();
    let t = corpus.records[0].tokens[0];
    for (a, b) in [
        (t.target_logprob, TARGET),
        (t.top1_logprob, TOP1),
        (t.mean_logprob, MEAN),
        (t.std_logprob, STD),
    ] {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

/// Two 8-token distributions with matching `z_t` but clearly different
/// `g_t`: a flat one and one with a confident wrong top-1.
#[test]
fn equal_z_can_hide_a_confident_misprediction() {
    // Family: top-1 mass a, observed-token mass b, remaining six tokens share
    // the rest evenly. Search the grid for the widest g gap at equal z.
    let mut cands = Vec::new();
    for ai in 1..100 {
        for bi in 1..100 {
            let (a, b) = (ai as f64 / 100.0, bi as f64 / 100.0);
            let rest = (1.0 - a - b) / 6.0;
            if rest <= 0.0 || !(a > b && a > rest) {
                continue;
            }
            let mut p = vec![a, b];
            p.extend([rest; 6]);
            let [t, top, mean, std] = brute_stats(&p, 1);
            cands.push(((t - mean) / std, (t - top) / std, a));
        }
    }
    cands.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let mut best = (0.0, 0.0, 0.0);
    for w in cands.windows(2) {
        let ((z1, g1, a1), (z2, g2, a2)) = (w[0], w[1]);
        if (z1 - z2).abs() < 1e-3 && (g1 - g2).abs() > best.0 {
            best = ((g1 - g2).abs(), a1, a2);
        }
    }
    assert!(best.0 > 0.5, "no pair found: {best:?}");
    assert!(
        (best.1 - best.2).abs() > 0.05,
        "top-1 masses should differ: {best:?}"
    );
}

#[test]
fn bottom_k_matches_full_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2000 {
        let len = rng.random_range(1..=64);
        let distinct = rng.random_range(1..=len);
        let xs: Vec<f64> = (0..len)
            .map(|_| -(rng.random_range(0..distinct) as f64) * 0.37)
            .collect();
        let k = rng.random_range(1..=100) as f64;
        let (mean, idx) = bottom_k_mean(&xs, k);

        let m = ((k * len as f64 / 100.0).floor() as usize).max(1);
        let mut sorted: Vec<(f64, usize)> = xs.iter().cloned().zip(0..).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want: Vec<usize> = sorted[..m].iter().map(|p| p.1).collect();
        want.sort();
        let want_mean = sorted[..m].iter().map(|p| p.0).sum::<f64>() / m as f64;
        assert_eq!(idx, want);
        assert!((mean - want_mean).abs() <= 1e-12 * want_mean.abs().max(1.0));
    }
}

#[test]
fn smoothing_matches_window_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let len = rng.random_range(1..40);
        let w = rng.random_range(1..12);
        let xs: Vec<f64> = (0..len).map(|_| -rng.random::<f64>() * 5.0).collect();
        let got = scoring::smooth(&xs, w, scoring::SmoothingOrder::Sequential);
        let want: Vec<f64> = if w > len {
            vec![xs.iter().sum::<f64>() / len as f64]
        } else {
            (0..=len - w)
                .map(|t| xs[t..t + w].iter().sum::<f64>() / w as f64)
                .collect()
        };
        assert_eq!(got.len(), want.len());
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

fn labeled(rng: &mut ChaCha8Rng, n: usize, levels: u32) -> Vec<ScoredSample<f64>> {
    let mut out: Vec<ScoredSample<f64>> = (0..n)
        .map(|i| ScoredSample {
            sample_id: format!("s{i}"),
            label: if rng.random_bool(0.5) {
                Label::Member
            } else {
                Label::Nonmember
            },
            scores: BTreeMap::from([("m".to_string(), rng.random_range(0..levels) as f64 / 7.0)]),
        })
        .collect();
    out[0].label = Label::Member;
    out[1].label = Label::Nonmember;
    out
}

fn brute_roc(set: &[ScoredSample<f64>]) -> Vec<(f64, f64)> {
    let nm = set.iter().filter(|s| s.label == Label::Member).count() as f64;
    let nn = set.len() as f64 - nm;
    let mut thresholds: Vec<f64> = set.iter().map(|s| s.scores["m"]).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut pts = vec![(0.0, 0.0)];
    for thr in thresholds {
        let tp = set
            .iter()
            .filter(|s| s.label == Label::Member && s.scores["m"] >= thr)
            .count() as f64;
        let fp = set
            .iter()
            .filter(|s| s.label == Label::Nonmember && s.scores["m"] >= thr)
            .count() as f64;
        pts.push((fp / nn, tp / nm));
    }
    pts
}

#[test]
fn metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..60 {
        let n = rng.random_range(2..300);
        let levels = if case % 3 == 0 { 4 } else { 1000 };
        let set = labeled(&mut rng, n, levels);

        let (mut wins, mut ties, mut pairs) = (0.0, 0.0, 0.0);
        for a in set.iter().filter(|s| s.label == Label::Member) {
            for b in set.iter().filter(|s| s.label == Label::Nonmember) {
                pairs += 1.0;
                let (x, y) = (a.scores["m"], b.scores["m"]);
                if x > y {
                    wins += 1.0;
                } else if x == y {
                    ties += 1.0;
                }
            }
        }
        let oracle = (wins + 0.5 * ties) / pairs;
        assert!((metrics::auroc(&set, "m").unwrap() - oracle).abs() < 1e-12);

        let roc = metrics::roc_curve(&set, "m").unwrap();
        assert_eq!(roc, brute_roc(&set));
        assert!((metrics::trapezoid_area(&roc) - oracle).abs() < 1e-12);

        for level in [0.01, 0.05, 0.1, 0.5] {
            let want = brute_roc(&set)
                .into_iter()
                .filter(|p| p.0 <= level)
                .map(|p| p.1)
                .fold(0.0, f64::max);
            assert_eq!(metrics::tpr_at_fpr(&set, "m", level).unwrap(), want);
        }

        let nn = set.iter().filter(|s| s.label == Label::Nonmember).count() as f64;
        for target in [0.0, 0.05, 0.2, 0.5] {
            let mut cands: Vec<f64> = set
                .iter()
                .filter(|s| s.label == Label::Nonmember)
                .map(|s| s.scores["m"])
                .collect();
            cands.push(f64::NEG_INFINITY);
            let want = cands
                .into_iter()
                .filter(|&lam| {
                    set.iter()
                        .filter(|s| s.label == Label::Nonmember && s.scores["m"] > lam)
                        .count() as f64
                        / nn
                        <= target
                })
                .fold(f64::INFINITY, f64::min);
            assert_eq!(
                metrics::calibrate_threshold(&set, "m", target).unwrap(),
                want
            );
        }
    }
}

#[test]
fn f32_scores_agree_with_f64() {
    let toks: Vec<[f64; 4]> = vec![
        [-1.0, -0.5, -1.2, 0.4],
        [-0.2, -0.2, -0.9, 0.3],
        [-3.0, -0.1, -1.0, 0.8],
        [-0.7, -0.3, -1.1, 0.5],
    ];
    let s64 = SampleRecord {
        sample_id: "a".into(),
        label: None,
        text: None,
        tokens: toks
            .iter()
            .map(|t| TokenStats::new(t[0], t[1], t[2], t[3]).unwrap())
            .collect(),
        neighbor_losses: None,
    };
    let s32 = SampleRecord {
        sample_id: "a".into(),
        label: None,
        text: None,
        tokens: toks
            .iter()
            .map(|t| TokenStats::new(t[0] as f32, t[1] as f32, t[2] as f32, t[3] as f32).unwrap())
            .collect(),
        neighbor_losses: None,
    };
    for m in [
        scoring::Method::GapK,
        scoring::Method::MinKpp,
        scoring::Method::Loss,
    ] {
        let cfg = scoring::MethodConfig::new(m).with_window(2).with_k(50.0);
        let a = scoring::score_sample(&s64, &cfg).unwrap().0;
        let b = scoring::score_sample(&s32, &cfg).unwrap().0;
        assert!((a - b as f64).abs() < 1e-5, "{m}: {a} vs {b}");
    }
}
