//! Spatio-temporal stability labels.
//!
//! Each point of a registered map is scored by how far it is from the closest
//! point in every other registered map of the same environment. Only the
//! largest of those distances matters: an object that is missing or displaced
//! in any single session is not long-term stable.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, SpatialIndex, StabilityClass};
use crate::error::{Error, Result};
use crate::registration::RegisteredMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabellingParams {
    /// Sensitivity in 1/m.
    pub lambda: f64,
    /// Session that receives the labels.
    pub reference_index: usize,
}

impl Default for LabellingParams {
    fn default() -> Self {
        LabellingParams {
            lambda: 0.5,
            reference_index: 0,
        }
    }
}

impl LabellingParams {
    pub fn validate(&self) -> Result<()> {
        validate_lambda(self.lambda)
    }
}

fn validate_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("lambda must be > 0, got {lambda}")))
    }
}

/// A map with one stability score per point.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelledCloud {
    pub cloud: PointCloud,
    pub labels: Vec<f64>,
    /// Largest nearest-neighbour distance into the other maps, meters.
    pub d_max: Vec<f64>,
}

impl LabelledCloud {
    pub fn new(cloud: PointCloud, labels: Vec<f64>, d_max: Vec<f64>) -> Result<Self> {
        for (len, _) in [(labels.len(), "labels"), (d_max.len(), "d_max")] {
            if len != cloud.len() {
                return Err(Error::LengthMismatch {
                    left: cloud.len(),
                    right: len,
                });
            }
        }
        if let Some(&bad) = labels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::LabelOutOfRange(bad));
        }
        if let Some(&bad) = d_max.iter().find(|d| !(**d >= 0.0)) {
            return Err(Error::InvalidDistance(bad));
        }
        Ok(LabelledCloud {
            cloud,
            labels,
            d_max,
        })
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn ground_truth(&self) -> Option<&[StabilityClass]> {
        self.cloud.ground_truth()
    }
}

/// Per-point distances to the closest point of each other map, one row per
/// point of `target`.
pub fn distance_features(target: &PointCloud, others: &[SpatialIndex]) -> Result<Vec<Vec<f64>>> {
    if others.is_empty() {
        return Err(Error::NeedTwoObservations);
    }
    Ok(target
        .points()
        .par_iter()
        .map(|p| others.iter().map(|idx| idx.nearest_distance(&p.position)).collect())
        .collect())
}

/// `1 - exp(-lambda * max(d))`.
pub fn stability_label(d: &[f64], lambda: f64) -> Result<f64> {
    validate_lambda(lambda)?;
    if d.is_empty() {
        return Err(Error::NeedTwoObservations);
    }
    let mut max = 0.0f64;
    for &x in d {
        if !(x >= 0.0) {
            return Err(Error::InvalidDistance(x));
        }
        max = max.max(x);
    }
    Ok(label_from_distance(max, lambda))
}

fn label_from_distance(d_max: f64, lambda: f64) -> f64 {
    -(-lambda * d_max).exp_m1()
}

/// Inverse of the label mapping: the distance, in meters, that produces `l`.
pub fn label_to_distance(l: f64, lambda: f64) -> Result<f64> {
    validate_lambda(lambda)?;
    if l >= 1.0 {
        return Err(Error::UnboundedDistance(l));
    }
    if !(l >= 0.0) {
        return Err(Error::LabelOutOfRange(l));
    }
    Ok(-(-l).ln_1p() / lambda)
}

/// Labels the map at `params.reference_index` against all the others.
pub fn label_map(maps: &[RegisteredMap], params: &LabellingParams) -> Result<LabelledCloud> {
    params.validate()?;
    if maps.len() < 2 {
        return Err(Error::NeedTwoObservations);
    }
    let target = maps.get(params.reference_index).ok_or_else(|| {
        Error::param(format!(
            "reference_index {} out of range for {} maps",
            params.reference_index,
            maps.len()
        ))
    })?;
    target.cloud().ensure_non_empty()?;
    let others = maps
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != params.reference_index)
        .map(|(_, m)| SpatialIndex::build(m.cloud()))
        .collect::<Result<Vec<_>>>()?;

    let d_max: Vec<f64> = distance_features(target.cloud(), &others)?
        .into_iter()
        .map(|row| row.into_iter().fold(0.0, f64::max))
        .collect();
    let labels = d_max
        .iter()
        .map(|&d| label_from_distance(d, params.lambda))
        .collect();
    LabelledCloud::new(target.cloud().clone(), labels, d_max)
}

/// Labels every map against the others, in input order.
pub fn label_all(maps: &[RegisteredMap], lambda: f64) -> Result<Vec<LabelledCloud>> {
    (0..maps.len())
        .map(|reference_index| {
            label_map(
                maps,
                &LabellingParams {
                    lambda,
                    reference_index,
                },
            )
        })
        .collect()
}
