//! Brute-force reference implementations, written without the library's
//! algorithms, for the oracle comparisons.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use stablemap_core::cloud::StabilityClass;

/// (threshold, tp, fp) for every distinct score, descending, by a full scan
/// per threshold.
pub fn brute_roc(scores: &[f64], truth: &[StabilityClass]) -> Vec<(f64, u64, u64)> {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    thresholds
        .into_iter()
        .map(|t| {
            let mut tp = 0;
            let mut fp = 0;
            for (s, c) in scores.iter().zip(truth) {
                if *s >= t {
                    if *c == StabilityClass::Dynamic {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            (t, tp, fp)
        })
        .collect()
}

/// Probability that a random dynamic point outscores a random stable one,
/// ties counting one half.
pub fn mann_whitney(scores: &[f64], truth: &[StabilityClass]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(truth).filter(|(_, c)| c.is_dynamic()).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(truth).filter(|(_, c)| !c.is_dynamic()).map(|(s, _)| *s).collect();
    let mut twice = 0u128;
    for p in &pos {
        for n in &neg {
            if p > n {
                twice += 2;
            } else if p == n {
                twice += 1;
            }
        }
    }
    twice as f64 / (2 * pos.len() as u128 * neg.len() as u128) as f64
}

/// Scan every distinct score; keep the largest g-mean, smallest threshold on ties.
pub fn brute_gmean(scores: &[f64], truth: &[StabilityClass]) -> (f64, f64) {
    let p = truth.iter().filter(|c| c.is_dynamic()).count() as u128;
    let n = truth.len() as u128 - p;
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best: Option<(u128, f64)> = None;
    for t in candidates {
        let tp = scores.iter().zip(truth).filter(|(s, c)| **s >= t && c.is_dynamic()).count() as u128;
        let tn = scores.iter().zip(truth).filter(|(s, c)| **s < t && !c.is_dynamic()).count() as u128;
        let key = tp * tn;
        if best.is_none_or(|(k, _)| key > k) {
            best = Some((key, t));
        }
    }
    let (key, t) = best.unwrap();
    (t, (key as f64 / (p * n) as f64).sqrt())
}

/// IoU per class from explicit index sets; a class absent from both sides
/// scores 1.
pub fn set_miou(pred: &[StabilityClass], truth: &[StabilityClass]) -> (f64, [f64; 2]) {
    let mut per = [0.0; 2];
    for (slot, class) in [StabilityClass::Stable, StabilityClass::Dynamic].into_iter().enumerate() {
        let p: BTreeSet<usize> = (0..pred.len()).filter(|&i| pred[i] == class).collect();
        let g: BTreeSet<usize> = (0..truth.len()).filter(|&i| truth[i] == class).collect();
        let union = p.union(&g).count();
        per[slot] = if union == 0 { 1.0 } else { p.intersection(&g).count() as f64 / union as f64 };
    }
    ((per[0] + per[1]) / 2.0, per)
}

/// Scores on a coarse grid so ties occur, with truth holding both classes.
pub fn random_instance(rng: &mut impl Rng, max_len: usize) -> (Vec<f64>, Vec<StabilityClass>) {
    let n = rng.random_range(2..=max_len);
    let levels = rng.random_range(2..=20);
    let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..=levels) as f64 / levels as f64).collect();
    let mut truth: Vec<StabilityClass> = (0..n)
        .map(|_| if rng.random_bool(0.4) { StabilityClass::Dynamic } else { StabilityClass::Stable })
        .collect();
    truth[0] = StabilityClass::Dynamic;
    truth[1] = StabilityClass::Stable;
    (scores, truth)
}
