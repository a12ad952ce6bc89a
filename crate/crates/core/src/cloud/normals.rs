use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use super::{Point, PointCloud, SpatialIndex, Vec3};
use crate::error::{Error, Result};

/// Height above the centroid of the default orientation viewpoint, meters.
const DEFAULT_VIEWPOINT_HEIGHT: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq)]
pub struct NormalParams {
    /// Neighbours used for the local plane fit, not counting the point itself.
    pub k: usize,
    /// Normals are flipped to face this point. Defaults to the cloud centroid
    /// raised by 1 km.
    pub viewpoint: Option<Vec3>,
}

impl Default for NormalParams {
    fn default() -> Self {
        NormalParams { k: 16, viewpoint: None }
    }
}

#[derive(Clone, Debug)]
pub struct NormalEstimate {
    pub cloud: PointCloud,
    /// Indices whose neighbourhood was coincident or collinear; these carry +Z.
    pub degenerate: Vec<usize>,
}

/// PCA normals: the eigenvector of the smallest eigenvalue of the covariance of
/// each point together with its `k` nearest neighbours.
pub fn estimate_normals(cloud: &PointCloud, params: &NormalParams) -> Result<NormalEstimate> {
    if params.k < 3 {
        return Err(Error::param(format!("normal k must be >= 3, got {}", params.k)));
    }
    cloud.ensure_non_empty()?;
    if cloud.len() < params.k + 1 {
        return Err(Error::InsufficientForNormals {
            points: cloud.len(),
            k: params.k,
        });
    }
    let index = SpatialIndex::build(cloud)?;
    let viewpoint = params.viewpoint.unwrap_or_else(|| {
        cloud.centroid().expect("non-empty") + Vec3::new(0.0, 0.0, DEFAULT_VIEWPOINT_HEIGHT)
    });

    let fitted: Vec<Option<Vec3>> = cloud
        .points()
        .par_iter()
        .map(|p| {
            let neighbours = index.k_nearest(&p.position, params.k + 1);
            let mut normal = plane_normal(neighbours.iter().map(|n| index.position(n.index)))?;
            if normal.dot(&(viewpoint - p.position)) < 0.0 {
                normal = -normal;
            }
            Some(normal)
        })
        .collect();

    let mut degenerate = Vec::new();
    let points = cloud
        .points()
        .iter()
        .zip(&fitted)
        .enumerate()
        .map(|(i, (p, n))| {
            let normal = n.unwrap_or_else(|| {
                degenerate.push(i);
                Vec3::z()
            });
            Point {
                position: p.position,
                normal: Some(normal),
            }
        })
        .collect();

    Ok(NormalEstimate {
        cloud: cloud.with_points(points),
        degenerate,
    })
}

/// Unit normal of the best-fit plane, or `None` when the samples do not span a
/// plane (all coincident or collinear).
fn plane_normal(samples: impl Iterator<Item = Vec3> + Clone) -> Option<Vec3> {
    let n = samples.clone().count() as f64;
    let mean = samples.clone().fold(Vec3::zeros(), |a, p| a + p) / n;
    let cov = samples.fold(Matrix3::zeros(), |acc, p| {
        let d = p - mean;
        acc + d * d.transpose()
    }) / n;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let middle = eig.eigenvalues[order[1]];
    let largest = eig.eigenvalues[order[2]];
    if largest <= f64::MIN_POSITIVE || middle <= 1e-10 * largest {
        return None;
    }
    let v = eig.eigenvectors.column(order[0]).into_owned();
    let norm = v.norm();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    Some(v / norm)
}
