//! Ground removal and outlier rejection that turn a raw observation into a
//! filtered off-ground observation. Ground removal runs first.

mod csf;
mod sor;

pub use csf::{classify_ground_csf, remove_ground_csf, CsfParams, GroundSplit};
pub use sor::{remove_outliers_sor, sor_inliers, SorParams};

use crate::cloud::PointCloud;
use crate::error::Result;

/// Off-ground, outlier-free observation.
pub fn filter_observation(cloud: &PointCloud, csf: &CsfParams, sor: &SorParams) -> Result<PointCloud> {
    let split = remove_ground_csf(cloud, csf)?;
    remove_outliers_sor(&split.offground, sor)
}
