//! Point-cloud representation, exact nearest-neighbour indexing and
//! surface-normal estimation.

mod kdtree;
mod normals;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kdtree::{build_index, nearest_distance, Neighbor, SpatialIndex};
pub use normals::{estimate_normals, NormalEstimate, NormalParams};

pub type Vec3 = Vector3<f64>;

/// Tolerance on the Euclidean length of a stored normal.
pub const UNIT_NORMAL_TOLERANCE: f64 = 1e-6;

/// Binary long-term stability class. Dynamic is the positive class in every
/// detection metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum StabilityClass {
    Stable = 0,
    Dynamic = 1,
}

impl StabilityClass {
    pub fn from_u8(value: u8) -> Option<Self> {
        match value {
            0 => Some(StabilityClass::Stable),
            1 => Some(StabilityClass::Dynamic),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn is_dynamic(self) -> bool {
        self == StabilityClass::Dynamic
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub position: Vec3,
    pub normal: Option<Vec3>,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point {
            position: Vec3::new(x, y, z),
            normal: None,
        }
    }

    pub fn at(position: Vec3) -> Self {
        Point {
            position,
            normal: None,
        }
    }

    pub fn with_normal(mut self, normal: Vec3) -> Self {
        self.normal = Some(normal);
        self
    }

    fn validate(&self, index: usize) -> Result<()> {
        if !self.position.iter().all(|c| c.is_finite()) {
            return Err(Error::param(format!("point {index} has a non-finite coordinate")));
        }
        if let Some(n) = self.normal {
            if !n.iter().all(|c| c.is_finite())
                || (n.norm() - 1.0).abs() > UNIT_NORMAL_TOLERANCE
            {
                return Err(Error::param(format!("point {index} normal is not unit length")));
            }
        }
        Ok(())
    }
}

/// One observation of the environment. Optionally carries a per-point
/// ground-truth class that follows the points through filtering and
/// transformation.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    frame_id: String,
    points: Vec<Point>,
    ground_truth: Option<Vec<StabilityClass>>,
}

impl PointCloud {
    /// Validates coordinates and normals. An empty cloud is representable but
    /// rejected by every pipeline operation.
    pub fn new(frame_id: impl Into<String>, points: Vec<Point>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            p.validate(i)?;
        }
        Ok(PointCloud {
            frame_id: frame_id.into(),
            points,
            ground_truth: None,
        })
    }

    pub fn from_positions(frame_id: impl Into<String>, positions: &[Vec3]) -> Result<Self> {
        Self::new(frame_id, positions.iter().copied().map(Point::at).collect())
    }

    pub fn with_ground_truth(mut self, ground_truth: Vec<StabilityClass>) -> Result<Self> {
        if ground_truth.len() != self.points.len() {
            return Err(Error::LengthMismatch {
                left: self.points.len(),
                right: ground_truth.len(),
            });
        }
        self.ground_truth = Some(ground_truth);
        Ok(self)
    }

    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }

    pub fn set_frame_id(&mut self, frame_id: impl Into<String>) {
        self.frame_id = frame_id.into();
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn ground_truth(&self) -> Option<&[StabilityClass]> {
        self.ground_truth.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> impl ExactSizeIterator<Item = Vec3> + '_ {
        self.points.iter().map(|p| p.position)
    }

    /// True when every point carries a normal.
    pub fn has_normals(&self) -> bool {
        !self.points.is_empty() && self.points.iter().all(|p| p.normal.is_some())
    }

    pub(crate) fn ensure_non_empty(&self) -> Result<()> {
        if self.points.is_empty() {
            Err(Error::EmptyCloud)
        } else {
            Ok(())
        }
    }

    /// Sub-cloud with the given point indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            frame_id: self.frame_id.clone(),
            points: indices.iter().map(|&i| self.points[i]).collect(),
            ground_truth: self
                .ground_truth
                .as_ref()
                .map(|gt| indices.iter().map(|&i| gt[i]).collect()),
        }
    }

    /// Same frame and ground truth with replacement points. Used by operations
    /// that move or annotate points without reordering them.
    pub(crate) fn with_points(&self, points: Vec<Point>) -> PointCloud {
        debug_assert_eq!(points.len(), self.points.len());
        PointCloud {
            frame_id: self.frame_id.clone(),
            points,
            ground_truth: self.ground_truth.clone(),
        }
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.positions().fold(Vec3::zeros(), |acc, p| acc + p);
        Some(sum / self.points.len() as f64)
    }

    /// Axis-aligned bounds as (min, max).
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.positions();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| (lo.inf(&p), hi.sup(&p))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nan_and_non_unit_normals() {
        assert!(PointCloud::new("a", vec![Point::new(f64::NAN, 0.0, 0.0)]).is_err());
        let bad = Point::new(0.0, 0.0, 0.0).with_normal(Vec3::new(0.0, 0.0, 2.0));
        assert!(PointCloud::new("a", vec![bad]).is_err());
        let good = Point::new(0.0, 0.0, 0.0).with_normal(Vec3::new(0.0, 0.6, 0.8));
        assert!(PointCloud::new("a", vec![good]).is_ok());
    }

    #[test]
    fn select_carries_ground_truth() {
        let cloud = PointCloud::from_positions(
            "s",
            &[Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)],
        )
        .unwrap()
        .with_ground_truth(vec![
            StabilityClass::Stable,
            StabilityClass::Dynamic,
            StabilityClass::Stable,
        ])
        .unwrap();
        let sub = cloud.select(&[2, 1]);
        assert_eq!(sub.points()[0].position.x, 2.0);
        assert_eq!(
            sub.ground_truth().unwrap(),
            &[StabilityClass::Stable, StabilityClass::Dynamic]
        );
    }

    #[test]
    fn bounds_and_centroid() {
        let cloud = PointCloud::from_positions(
            "s",
            &[Vec3::new(-1.0, 2.0, 0.0), Vec3::new(3.0, -2.0, 1.0)],
        )
        .unwrap();
        let (lo, hi) = cloud.bounds().unwrap();
        assert_eq!(lo, Vec3::new(-1.0, -2.0, 0.0));
        assert_eq!(hi, Vec3::new(3.0, 2.0, 1.0));
        assert_eq!(cloud.centroid().unwrap(), Vec3::new(1.0, 0.0, 0.5));
    }
}
