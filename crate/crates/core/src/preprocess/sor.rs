use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, SpatialIndex};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SorParams {
    pub k: usize,
    pub std_multiplier: f64,
}

impl Default for SorParams {
    fn default() -> Self {
        SorParams {
            k: 12,
            std_multiplier: 1.0,
        }
    }
}

impl SorParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("sor k must be >= 1"));
        }
        if !(self.std_multiplier > 0.0 && self.std_multiplier.is_finite()) {
            return Err(Error::param("sor std_multiplier must be > 0"));
        }
        Ok(())
    }
}

pub fn remove_outliers_sor(cloud: &PointCloud, params: &SorParams) -> Result<PointCloud> {
    Ok(cloud.select(&sor_inliers(cloud, params)?))
}

/// Indices of points whose mean distance to their `k` nearest neighbours is
/// within `mean + std_multiplier * stddev` of those means over the cloud.
pub fn sor_inliers(cloud: &PointCloud, params: &SorParams) -> Result<Vec<usize>> {
    params.validate()?;
    if cloud.len() <= params.k {
        return Err(Error::InsufficientForSor {
            points: cloud.len(),
            k: params.k,
        });
    }
    let index = SpatialIndex::build(cloud)?;
    let k = params.k;
    let mean_dist: Vec<f64> = cloud
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let sum: f64 = index
                .k_nearest(&p.position, k + 1)
                .into_iter()
                .filter(|n| n.index != i)
                .take(k)
                .map(|n| n.distance)
                .sum();
            sum / k as f64
        })
        .collect();

    let n = mean_dist.len() as f64;
    let mean = mean_dist.iter().sum::<f64>() / n;
    let var = mean_dist.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // slack absorbs rounding when every neighbourhood is identical
    let threshold = mean + params.std_multiplier * var.sqrt() + 1e-12 * mean.abs();

    Ok((0..mean_dist.len())
        .filter(|&i| mean_dist[i] <= threshold)
        .collect())
}
