//! Rigid alignment of filtered observations into the reference frame.

use nalgebra::{Matrix3, Rotation3, SymmetricEigen, Unit};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{Point, PointCloud, SpatialIndex, Vec3};
use crate::error::{Error, Result};

/// Tolerance for orthonormality and unit determinant of a rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-9;
/// Consecutive non-improving iterations after which ICP gives up.
const STALL_LIMIT: usize = 5;

/// Proper rigid motion `p -> R p + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformRepr", into = "TransformRepr")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<RigidTransform> for TransformRepr {
    fn from(t: RigidTransform) -> Self {
        let r = t.rotation;
        TransformRepr {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl TryFrom<TransformRepr> for RigidTransform {
    type Error = Error;

    fn try_from(r: TransformRepr) -> Result<Self> {
        let m = r.rotation;
        RigidTransform::new(
            Matrix3::new(
                m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
            ),
            Vec3::from(r.translation),
        )
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let orth = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if !(orth <= ROTATION_TOLERANCE && (det - 1.0).abs() <= ROTATION_TOLERANCE)
            || !translation.iter().all(|c| c.is_finite())
        {
            return Err(Error::param("rotation is not a proper orthonormal matrix"));
        }
        Ok(RigidTransform {
            rotation,
            translation,
        })
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        RigidTransform {
            rotation: *rotation.matrix(),
            translation,
        }
    }

    pub fn translation_only(translation: Vec3) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity() && self.translation == Vec3::zeros()
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        let r = &self.rotation;
        let axis = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
        axis.norm().atan2(r.trace() - 1.0)
    }

    /// Rotation angle and translation distance of `self⁻¹ ∘ other`.
    pub fn error_to(&self, other: &RigidTransform) -> (f64, f64) {
        let delta = self.inverse().compose(other);
        (delta.angle(), delta.translation.norm())
    }
}

/// Maps positions by `R p + t` and normals by `R n`, preserving point order.
pub fn apply_transform(t: &RigidTransform, cloud: &PointCloud) -> PointCloud {
    if t.is_identity() {
        return cloud.clone();
    }
    let points = cloud
        .points()
        .iter()
        .map(|p| Point {
            position: t.apply_point(&p.position),
            normal: p.normal.map(|n| t.apply_vector(&n)),
        })
        .collect();
    cloud.with_points(points)
}

/// Least-squares rigid transform taking each source point onto its paired
/// target point (Kabsch). Reflections are folded back into a proper rotation.
pub fn best_rigid_transform(pairs: &[(Vec3, Vec3)]) -> Result<RigidTransform> {
    if pairs.len() < 3 {
        return Err(Error::DegenerateCorrespondence);
    }
    let n = pairs.len() as f64;
    let src_mean = pairs.iter().fold(Vec3::zeros(), |a, (s, _)| a + s) / n;
    let dst_mean = pairs.iter().fold(Vec3::zeros(), |a, (_, d)| a + d) / n;

    let mut cross = Matrix3::zeros();
    let mut src_cov = Matrix3::zeros();
    let mut dst_cov = Matrix3::zeros();
    for (s, d) in pairs {
        let s = s - src_mean;
        let d = d - dst_mean;
        cross += s * d.transpose();
        src_cov += s * s.transpose();
        dst_cov += d * d.transpose();
    }
    if spans_line_at_most(&src_cov) || spans_line_at_most(&dst_cov) {
        return Err(Error::DegenerateCorrespondence);
    }

    let svd = cross.svd(true, true);
    let u = svd.u.ok_or(Error::DegenerateCorrespondence)?;
    let v = svd.v_t.ok_or(Error::DegenerateCorrespondence)?.transpose();
    let mut correction = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        correction[(2, 2)] = -1.0;
    }
    // singular values come sorted descending, so the flip hits the weakest axis
    let rotation = v * correction * u.transpose();
    let translation = dst_mean - rotation * src_mean;
    Ok(RigidTransform {
        rotation,
        translation,
    })
}

fn spans_line_at_most(cov: &Matrix3<f64>) -> bool {
    let mut ev: Vec<f64> = SymmetricEigen::new(*cov).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev[2] <= f64::MIN_POSITIVE || ev[1] <= 1e-12 * ev[2]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpParams {
    pub max_iterations: usize,
    pub max_correspondence_dist: f64,
    pub convergence_eps: f64,
    pub initial_guess: RigidTransform,
    /// Strictly decreasing gates for refinement passes after the main one.
    pub refine_gates: Vec<f64>,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams {
            max_iterations: 50,
            max_correspondence_dist: 2.0,
            convergence_eps: 1e-5,
            initial_guess: RigidTransform::identity(),
            refine_gates: vec![0.5, 0.1],
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::param("icp max_iterations must be >= 1"));
        }
        if !(self.max_correspondence_dist > 0.0) {
            return Err(Error::param("icp max_correspondence_dist must be > 0"));
        }
        if !(self.convergence_eps >= 0.0) {
            return Err(Error::param("icp convergence_eps must be >= 0"));
        }
        let mut previous = self.max_correspondence_dist;
        for &g in &self.refine_gates {
            if !(g > 0.0 && g < previous) {
                return Err(Error::param("icp refine_gates must be positive and strictly decreasing below max_correspondence_dist"));
            }
            previous = g;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    pub transform: RigidTransform,
    /// Gated RMSE at `transform`: every source point contributes its squared
    /// nearest-target distance, capped at the squared correspondence gate.
    pub residual_rmse: f64,
    pub iterations: usize,
    pub inliers: usize,
    pub converged: bool,
    /// Set when the residual stopped improving and the best transform seen
    /// was returned instead.
    pub stalled: bool,
    /// Gated RMSE before the first update and after every iteration.
    pub history: Vec<f64>,
}

struct Matching {
    pairs: Vec<(Vec3, Vec3)>,
    rmse: f64,
}

fn match_points(source: &[Vec3], target: &SpatialIndex, t: &RigidTransform, gate: f64) -> Matching {
    let nearest: Vec<(Vec3, Vec3, f64)> = source
        .par_iter()
        .map(|p| {
            let moved = t.apply_point(p);
            let n = target.nearest(&moved);
            (*p, target.position(n.index), n.distance)
        })
        .collect();
    let gate2 = gate * gate;
    let mut sum = 0.0;
    let mut pairs = Vec::with_capacity(nearest.len());
    for (s, d, dist) in nearest {
        if dist <= gate {
            sum += dist * dist;
            pairs.push((s, d));
        } else {
            sum += gate2;
        }
    }
    Matching {
        pairs,
        rmse: (sum / source.len() as f64).sqrt(),
    }
}

/// Point-to-point ICP aligning `source` onto `target`.
///
/// After the main pass at `max_correspondence_dist`, each gate in
/// `refine_gates` reruns ICP from the best transform so far. The gated RMSE
/// with a smaller gate never exceeds the one with a larger gate at the same
/// transform, so the concatenated history keeps the monotone-best property.
/// A refinement pass left with fewer than 3 correspondences ends refinement
/// and keeps the previous result.
pub fn icp_align(source: &PointCloud, target: &PointCloud, params: &IcpParams) -> Result<IcpResult> {
    params.validate()?;
    source.ensure_non_empty()?;
    target.ensure_non_empty()?;
    let target_index = SpatialIndex::build(target)?;
    let src: Vec<Vec3> = source.positions().collect();

    let mut result = icp_pass(
        &src,
        &target_index,
        params.initial_guess,
        params.max_correspondence_dist,
        params,
    )?;
    for &gate in &params.refine_gates {
        match icp_pass(&src, &target_index, result.transform, gate, params) {
            Ok(next) => {
                result.history.extend_from_slice(&next.history);
                result = IcpResult {
                    iterations: result.iterations + next.iterations,
                    history: std::mem::take(&mut result.history),
                    ..next
                };
            }
            Err(Error::RegistrationDegenerate(_)) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(result)
}

fn icp_pass(
    src: &[Vec3],
    target_index: &SpatialIndex,
    start: RigidTransform,
    gate: f64,
    params: &IcpParams,
) -> Result<IcpResult> {
    let mut current = start;
    let mut matching = match_points(src, target_index, &current, gate);
    let mut history = vec![matching.rmse];
    let mut best = (current, matching.rmse, matching.pairs.len());
    let mut stall = 0;
    let mut converged = false;
    let mut stalled = false;
    let mut iterations = 0;

    while iterations < params.max_iterations {
        if matching.pairs.len() < 3 {
            return Err(Error::RegistrationDegenerate(matching.pairs.len()));
        }
        iterations += 1;
        current = best_rigid_transform(&matching.pairs)?;
        let previous = matching.rmse;
        matching = match_points(src, target_index, &current, gate);
        history.push(matching.rmse);

        if matching.rmse < best.1 {
            best = (current, matching.rmse, matching.pairs.len());
        }
        if matching.rmse >= previous {
            stall += 1;
        } else {
            stall = 0;
        }
        if (previous - matching.rmse).abs() < params.convergence_eps {
            converged = true;
            break;
        }
        if stall >= STALL_LIMIT {
            stalled = true;
            break;
        }
    }

    Ok(IcpResult {
        transform: best.0,
        residual_rmse: best.1,
        iterations,
        inliers: best.2,
        converged,
        stalled,
        history,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegisteredMap {
    cloud: PointCloud,
    transform: RigidTransform,
}

impl RegisteredMap {
    /// The reference observation; it receives the identity.
    pub fn reference(cloud: PointCloud) -> Self {
        RegisteredMap {
            cloud,
            transform: RigidTransform::identity(),
        }
    }

    /// Aligns `observation` onto the reference map with ICP.
    pub fn align(
        observation: &PointCloud,
        reference: &RegisteredMap,
        params: &IcpParams,
    ) -> Result<(RegisteredMap, IcpResult)> {
        let result = icp_align(observation, &reference.cloud, params)?;
        let map = RegisteredMap {
            cloud: apply_transform(&result.transform, observation),
            transform: result.transform,
        };
        Ok((map, result))
    }

    /// Wraps a cloud that is already filtered and in the reference frame,
    /// such as one read back from the output of the `register` stage.
    pub fn from_registered(cloud: PointCloud, transform: RigidTransform) -> Self {
        RegisteredMap { cloud, transform }
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn into_cloud(self) -> PointCloud {
        self.cloud
    }

    /// Session-to-reference transform that produced this map.
    pub fn transform(&self) -> &RigidTransform {
        &self.transform
    }
}
