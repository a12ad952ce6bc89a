//! Sample weighting, regression loss and the detection and segmentation
//! metrics used to evaluate stability scores.

mod roc;
mod weights;

use serde::{Deserialize, Serialize};

pub use roc::{auc, optimal_threshold_gmean, roc_curve, GmeanThreshold, RocCurve, RocPoint};
pub use weights::{dense_weights, label_density, DensityEstimator, LabelDensity, WeightParams};

use crate::cloud::StabilityClass;
use crate::error::{Error, Result};
use crate::labelling::label_to_distance;

/// `sqrt(mean(w_i * (pred_i - truth_i)^2))`.
pub fn weighted_rmse(pred: &[f64], truth: &[f64], weights: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if weights.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: weights.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::param("rmse needs at least one sample"));
    }
    if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
        return Err(Error::NegativeWeight { index, value });
    }
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .zip(weights)
        .map(|((p, t), w)| w * (p - t) * (p - t))
        .sum();
    Ok((sum / pred.len() as f64).sqrt())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    weighted_rmse(pred, truth, &vec![1.0; pred.len()])
}

/// Per-class intersection over union, indexed by class (stable, dynamic),
/// and their mean. A class absent from both prediction and truth scores 1.
pub fn miou(pred: &[StabilityClass], truth: &[StabilityClass]) -> Result<(f64, [f64; 2])> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    let mut inter = [0usize; 2];
    let mut union = [0usize; 2];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            inter[p as usize] += 1;
            union[p as usize] += 1;
        } else {
            union[p as usize] += 1;
            union[t as usize] += 1;
        }
    }
    let iou = |c: usize| {
        if union[c] == 0 {
            1.0
        } else {
            inter[c] as f64 / union[c] as f64
        }
    };
    let per_class = [iou(0), iou(1)];
    Ok(((per_class[0] + per_class[1]) / 2.0, per_class))
}

/// Scores at or above `threshold` are dynamic.
pub fn binarize(scores: &[f64], threshold: f64) -> Vec<StabilityClass> {
    scores
        .iter()
        .map(|&s| {
            if s >= threshold {
                StabilityClass::Dynamic
            } else {
                StabilityClass::Stable
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub map: String,
    pub points: usize,
    pub auc: f64,
    pub optimal_threshold: f64,
    /// Distance equivalent of the optimal threshold; `None` when the
    /// threshold is 1 and no finite distance maps to it.
    pub optimal_threshold_meters: Option<f64>,
    pub gmean: f64,
    /// Threshold used for the binary metrics: either the optimum above or a
    /// threshold fixed from another map.
    pub applied_threshold: f64,
    pub miou: f64,
    /// IoU of the stable and dynamic classes.
    pub per_class_iou: [f64; 2],
    /// RMSE of the scores against reference stability labels, when given.
    pub rmse: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct EvaluationInput<'a> {
    pub map: &'a str,
    pub scores: &'a [f64],
    pub truth: &'a [StabilityClass],
    /// Reference labels for the RMSE column.
    pub reference_labels: Option<&'a [f64]>,
    /// Binarise at this threshold instead of this map's own optimum.
    pub fixed_threshold: Option<f64>,
    pub lambda: f64,
}

/// ROC AUC, g-mean optimal threshold (also in meters), mIoU at the applied
/// threshold and optional RMSE.
pub fn evaluate(input: &EvaluationInput<'_>) -> Result<EvaluationReport> {
    let curve = roc_curve(input.scores, input.truth)?;
    let area = auc(&curve);
    let best = optimal_threshold_gmean(&curve);
    let threshold_meters = if best.threshold >= 1.0 {
        None
    } else {
        Some(label_to_distance(best.threshold.max(0.0), input.lambda)?)
    };
    let applied = input.fixed_threshold.unwrap_or(best.threshold);
    let (m, per_class) = miou(&binarize(input.scores, applied), input.truth)?;
    let rmse = input
        .reference_labels
        .map(|labels| rmse(input.scores, labels))
        .transpose()?;
    Ok(EvaluationReport {
        map: input.map.to_string(),
        points: input.scores.len(),
        auc: area,
        optimal_threshold: best.threshold,
        optimal_threshold_meters: threshold_meters,
        gmean: best.gmean,
        applied_threshold: applied,
        miou: m,
        per_class_iou: per_class,
        rmse,
    })
}
