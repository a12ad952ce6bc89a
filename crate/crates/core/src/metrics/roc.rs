use crate::cloud::StabilityClass;
use crate::error::{Error, Result};

/// One operating point: a point is called dynamic iff its score is at least
/// `threshold`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Operating points for every distinct score, swept from the highest
/// threshold down. Starts at (0, 0) with an infinite threshold and ends at
/// (1, 1).
#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub positives: u64,
    pub negatives: u64,
}

pub fn roc_curve(scores: &[f64], truth: &[StabilityClass]) -> Result<RocCurve> {
    if scores.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: truth.len(),
        });
    }
    if let Some(&bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::param(format!("non-finite score {bad}")));
    }
    let positives = truth.iter().filter(|c| c.is_dynamic()).count() as u64;
    let negatives = truth.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateRoc);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let point = |threshold, tp: u64, fp: u64| RocPoint {
        threshold,
        true_positives: tp,
        false_positives: fp,
        tpr: tp as f64 / positives as f64,
        fpr: fp as f64 / negatives as f64,
    };
    let mut points = vec![point(f64::INFINITY, 0, 0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    for group in order.chunk_by(|&a, &b| scores[a] == scores[b]) {
        for &i in group {
            if truth[i].is_dynamic() {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        points.push(point(scores[group[0]], tp, fp));
    }
    Ok(RocCurve {
        points,
        positives,
        negatives,
    })
}

/// Trapezoidal area under the curve, accumulated in integer counts so that it
/// equals the Mann-Whitney statistic (ties counted as one half) exactly.
pub fn auc(curve: &RocCurve) -> f64 {
    let twice_area: u128 = curve
        .points
        .windows(2)
        .map(|w| {
            let dfp = u128::from(w[1].false_positives - w[0].false_positives);
            dfp * u128::from(w[1].true_positives + w[0].true_positives)
        })
        .sum();
    twice_area as f64 / (2 * u128::from(curve.positives) * u128::from(curve.negatives)) as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmeanThreshold {
    pub threshold: f64,
    pub gmean: f64,
}

/// Threshold maximising `sqrt(TPR * (1 - FPR))`; ties go to the smallest
/// threshold.
pub fn optimal_threshold_gmean(curve: &RocCurve) -> GmeanThreshold {
    let n = curve.negatives;
    let mut best: Option<(u128, &RocPoint)> = None;
    for p in curve.points.iter().filter(|p| p.threshold.is_finite()) {
        // TPR * TNR scaled by P * N
        let key = u128::from(p.true_positives) * u128::from(n - p.false_positives);
        match best {
            Some((k, q)) if key < k || (key == k && p.threshold > q.threshold) => {}
            _ => best = Some((key, p)),
        }
    }
    match best {
        Some((key, p)) => GmeanThreshold {
            threshold: p.threshold,
            gmean: (key as f64 / (u128::from(curve.positives) * u128::from(n)) as f64).sqrt(),
        },
        None => GmeanThreshold {
            threshold: f64::INFINITY,
            gmean: 0.0,
        },
    }
}
