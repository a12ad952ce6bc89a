//! Seeded multi-session parking-lot scenes with exact per-point ground truth.
//!
//! Walls, poles and trees are sampled once and reappear unchanged in every
//! session. Cars are sampled once in their own frame and placed per session
//! from a schedule that includes absence. Ghost trails exist in exactly one
//! session. Noise is added after the ground truth is fixed, and every session
//! is then expressed in its own randomly perturbed frame.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::{Point, PointCloud, StabilityClass, Vec3};
use crate::error::{Error, Result};
use crate::registration::{apply_transform, RigidTransform};

const CAR_SIZE: [f64; 3] = [1.8, 4.5, 1.5];
const SLOT_PITCH: f64 = 3.0;
const CLEARANCE: f64 = 1.5;
const GHOST_SPACING: f64 = 0.1;

// random stream ids
const STREAM_LAYOUT: u64 = 1;
const STREAM_FRAMES: u64 = 2;
const STREAM_GROUND: u64 = 3;
const STREAM_STATIC: u64 = 1 << 16;
const STREAM_CAR: u64 = 2 << 16;
const STREAM_GHOST: u64 = 3 << 16;
const STREAM_NOISE: u64 = 4 << 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    /// Footprint in x and y, meters, centred on the world origin.
    pub extent: [f64; 2],
    pub sessions: usize,
    pub poles: usize,
    pub trees: usize,
    pub walls: usize,
    pub cars: usize,
    pub ghost_trails: usize,
    /// Probability that a car is absent from a given session.
    pub car_absence: f64,
    pub sensor_noise_sigma: f64,
    /// Surface samples per square meter.
    pub point_density: f64,
    /// Upper bound on each session frame's rotation, degrees.
    pub max_rotation_deg: f64,
    /// Largest tilt of the rotation axis away from vertical, degrees.
    pub max_axis_tilt_deg: f64,
    /// Upper bound on each session frame's translation, meters.
    pub max_translation: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            extent: [40.0, 30.0],
            sessions: 5,
            poles: 3,
            trees: 2,
            walls: 3,
            cars: 6,
            ghost_trails: 1,
            car_absence: 0.2,
            sensor_noise_sigma: 0.01,
            point_density: 20.0,
            max_rotation_deg: 10.0,
            max_axis_tilt_deg: 6.0,
            max_translation: 2.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sessions < 2 {
            return Err(Error::param("scene needs at least 2 sessions"));
        }
        if !(self.extent[0] > 0.0 && self.extent[1] > 0.0) {
            return Err(Error::param("scene extent must be positive"));
        }
        if !(self.point_density > 0.0) {
            return Err(Error::param("point_density must be positive"));
        }
        if !(self.sensor_noise_sigma >= 0.0) {
            return Err(Error::param("sensor_noise_sigma must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.car_absence) {
            return Err(Error::param("car_absence must be in [0, 1)"));
        }
        if !(self.max_rotation_deg >= 0.0 && self.max_translation >= 0.0 && self.max_axis_tilt_deg >= 0.0) {
            return Err(Error::param("frame perturbation bounds must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StaticObject {
    Pole {
        center: [f64; 2],
        radius: f64,
        height: f64,
    },
    Tree {
        center: [f64; 2],
        trunk_radius: f64,
        trunk_height: f64,
        crown_radius: f64,
    },
    Wall {
        start: [f64; 2],
        end: [f64; 2],
        height: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

/// A box-shaped car with one optional pose per session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarTrack {
    /// Width (local x), length (local y), height.
    pub size: [f64; 3],
    pub poses: Vec<Option<Pose2>>,
}

/// Sparse streak left by an object moving during one recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GhostTrail {
    pub session: usize,
    pub start: [f64; 3],
    pub end: [f64; 3],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneLayout {
    pub statics: Vec<StaticObject>,
    pub cars: Vec<CarTrack>,
    pub ghosts: Vec<GhostTrail>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    /// Points in this session's own frame, with ground truth attached.
    pub cloud: PointCloud,
    pub ground_mask: Vec<bool>,
    pub world_to_session: RigidTransform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionBundle {
    pub spec: SceneSpec,
    pub layout: SceneLayout,
    pub sessions: Vec<Session>,
}

impl SessionBundle {
    /// Transform carrying session `k`'s frame into `reference`'s frame.
    pub fn true_alignment(&self, k: usize, reference: usize) -> RigidTransform {
        self.sessions[reference]
            .world_to_session
            .compose(&self.sessions[k].world_to_session.inverse())
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn sample_count(area: f64, density: f64) -> usize {
    ((area * density).round() as usize).max(1)
}

pub fn generate_scene(spec: &SceneSpec) -> Result<SessionBundle> {
    spec.validate()?;
    let layout = random_layout(spec)?;
    generate_scene_with_layout(spec, layout)
}

/// Renders an explicit layout. Car schedules must list one entry per session.
pub fn generate_scene_with_layout(spec: &SceneSpec, layout: SceneLayout) -> Result<SessionBundle> {
    spec.validate()?;
    validate_layout(spec, &layout)?;

    let ground = sample_ground(spec);
    let statics: Vec<Vec<Vec3>> = layout
        .statics
        .iter()
        .enumerate()
        .map(|(i, o)| sample_static(o, spec.point_density, &mut stream(spec.seed, STREAM_STATIC + i as u64)))
        .collect();
    let cars: Vec<Vec<Vec3>> = layout
        .cars
        .iter()
        .enumerate()
        .map(|(i, c)| sample_box(c.size, spec.point_density, &mut stream(spec.seed, STREAM_CAR + i as u64)))
        .collect();
    let ghosts: Vec<Vec<Vec3>> = layout
        .ghosts
        .iter()
        .enumerate()
        .map(|(i, g)| sample_ghost(g, &mut stream(spec.seed, STREAM_GHOST + i as u64)))
        .collect();

    let mut frame_rng = stream(spec.seed, STREAM_FRAMES);
    let mut sessions = Vec::with_capacity(spec.sessions);
    for s in 0..spec.sessions {
        let mut positions: Vec<Vec3> = Vec::new();
        let mut truth = Vec::new();
        let mut ground_mask = Vec::new();
        let mut push = |pts: &[Vec3], class: StabilityClass, is_ground: bool| {
            positions.extend_from_slice(pts);
            truth.extend(std::iter::repeat_n(class, pts.len()));
            ground_mask.extend(std::iter::repeat_n(is_ground, pts.len()));
        };

        push(&ground, StabilityClass::Stable, true);
        for pts in &statics {
            push(pts, StabilityClass::Stable, false);
        }
        for (track, local) in layout.cars.iter().zip(&cars) {
            if let Some(pose) = track.poses[s] {
                let placed: Vec<Vec3> = local.iter().map(|p| place(p, &pose)).collect();
                push(&placed, StabilityClass::Dynamic, false);
            }
        }
        for (g, pts) in layout.ghosts.iter().zip(&ghosts) {
            if g.session == s {
                push(pts, StabilityClass::Dynamic, false);
            }
        }

        if spec.sensor_noise_sigma > 0.0 {
            let noise = Normal::new(0.0, spec.sensor_noise_sigma)
                .map_err(|e| Error::param(e.to_string()))?;
            let mut rng = stream(spec.seed, STREAM_NOISE + s as u64);
            for p in positions.iter_mut() {
                *p += Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            }
        }

        let world_to_session = random_frame(spec, &mut frame_rng);
        let world = PointCloud::new(format!("session_{s}"), positions.into_iter().map(Point::at).collect())?
            .with_ground_truth(truth)?;
        sessions.push(Session {
            cloud: apply_transform(&world_to_session, &world),
            ground_mask,
            world_to_session,
        });
    }

    Ok(SessionBundle {
        spec: spec.clone(),
        layout,
        sessions,
    })
}

/// Expected (stable, dynamic) point counts of a session, from surface areas
/// and the sampling density alone.
pub fn expected_class_counts(spec: &SceneSpec, layout: &SceneLayout, session: usize) -> (usize, usize) {
    let d = spec.point_density;
    let ground = sample_count(spec.extent[0] * spec.extent[1], d);
    let stable = ground
        + layout
            .statics
            .iter()
            .map(|o| static_areas(o).iter().map(|&a| sample_count(a, d)).sum::<usize>())
            .sum::<usize>();
    let dynamic = layout
        .cars
        .iter()
        .filter(|c| c.poses[session].is_some())
        .map(|c| box_faces(c.size).iter().map(|f| sample_count(f.area(), d)).sum::<usize>())
        .sum::<usize>()
        + layout
            .ghosts
            .iter()
            .filter(|g| g.session == session)
            .map(ghost_count)
            .sum::<usize>();
    (stable, dynamic)
}

fn random_frame(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> RigidTransform {
    let tilt = spec.max_axis_tilt_deg.to_radians();
    let tilt_angle = rng.random_range(0.0..=tilt);
    let tilt_dir = rng.random_range(0.0..TAU);
    let axis = Vec3::new(
        tilt_angle.sin() * tilt_dir.cos(),
        tilt_angle.sin() * tilt_dir.sin(),
        tilt_angle.cos(),
    );
    let max_rot = spec.max_rotation_deg.to_radians();
    let angle = rng.random_range(-max_rot..=max_rot);

    let max_t = spec.max_translation;
    let z = rng.random_range(-1.0..=1.0) * (0.1 * max_t);
    let r = rng.random_range(0.0..=1.0) * (max_t * max_t - z * z).max(0.0).sqrt();
    let heading = rng.random_range(0.0..TAU);
    RigidTransform::from_axis_angle(axis, angle, Vec3::new(r * heading.cos(), r * heading.sin(), z))
}

fn place(p: &Vec3, pose: &Pose2) -> Vec3 {
    let (s, c) = pose.yaw.sin_cos();
    Vec3::new(c * p.x - s * p.y + pose.x, s * p.x + c * p.y + pose.y, p.z)
}

fn sample_ground(spec: &SceneSpec) -> Vec<Vec3> {
    let mut rng = stream(spec.seed, STREAM_GROUND);
    let [w, h] = spec.extent;
    (0..sample_count(w * h, spec.point_density))
        .map(|_| Vec3::new(rng.random_range(-w / 2.0..w / 2.0), rng.random_range(-h / 2.0..h / 2.0), 0.0))
        .collect()
}

fn static_areas(o: &StaticObject) -> Vec<f64> {
    match *o {
        StaticObject::Pole { radius, height, .. } => vec![TAU * radius * height],
        StaticObject::Tree {
            trunk_radius,
            trunk_height,
            crown_radius,
            ..
        } => vec![TAU * trunk_radius * trunk_height, 4.0 * PI * crown_radius * crown_radius],
        StaticObject::Wall { start, end, height } => {
            vec![((end[0] - start[0]).hypot(end[1] - start[1])) * height]
        }
    }
}

fn sample_cylinder(rng: &mut ChaCha8Rng, center: [f64; 2], radius: f64, z0: f64, height: f64, n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|_| {
            let a = rng.random_range(0.0..TAU);
            Vec3::new(center[0] + radius * a.cos(), center[1] + radius * a.sin(), z0 + rng.random_range(0.0..height))
        })
        .collect()
}

fn sample_static(o: &StaticObject, density: f64, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let areas = static_areas(o);
    match *o {
        StaticObject::Pole { center, radius, height } => {
            sample_cylinder(rng, center, radius, 0.0, height, sample_count(areas[0], density))
        }
        StaticObject::Tree {
            center,
            trunk_radius,
            trunk_height,
            crown_radius,
        } => {
            let mut pts = sample_cylinder(rng, center, trunk_radius, 0.0, trunk_height, sample_count(areas[0], density));
            let crown_center = Vec3::new(center[0], center[1], trunk_height + 0.8 * crown_radius);
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            for _ in 0..sample_count(areas[1], density) {
                let mut dir = Vec3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
                while dir.norm() < 1e-9 {
                    dir = Vec3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
                }
                pts.push(crown_center + dir.normalize() * crown_radius);
            }
            pts
        }
        StaticObject::Wall { start, end, height } => (0..sample_count(areas[0], density))
            .map(|_| {
                let t = rng.random_range(0.0..1.0);
                Vec3::new(
                    start[0] + t * (end[0] - start[0]),
                    start[1] + t * (end[1] - start[1]),
                    rng.random_range(0.0..height),
                )
            })
            .collect(),
    }
}

struct Face {
    origin: Vec3,
    u: Vec3,
    v: Vec3,
}

impl Face {
    fn area(&self) -> f64 {
        self.u.cross(&self.v).norm()
    }
}

/// Roof and four sides of a box standing on z = 0, centred on the local origin.
fn box_faces(size: [f64; 3]) -> [Face; 5] {
    let [w, l, h] = size;
    let (x0, y0) = (-w / 2.0, -l / 2.0);
    [
        Face { origin: Vec3::new(x0, y0, h), u: Vec3::new(w, 0.0, 0.0), v: Vec3::new(0.0, l, 0.0) },
        Face { origin: Vec3::new(x0, y0, 0.0), u: Vec3::new(w, 0.0, 0.0), v: Vec3::new(0.0, 0.0, h) },
        Face { origin: Vec3::new(x0, -y0, 0.0), u: Vec3::new(w, 0.0, 0.0), v: Vec3::new(0.0, 0.0, h) },
        Face { origin: Vec3::new(x0, y0, 0.0), u: Vec3::new(0.0, l, 0.0), v: Vec3::new(0.0, 0.0, h) },
        Face { origin: Vec3::new(-x0, y0, 0.0), u: Vec3::new(0.0, l, 0.0), v: Vec3::new(0.0, 0.0, h) },
    ]
}

fn sample_box(size: [f64; 3], density: f64, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let mut pts = Vec::new();
    for face in box_faces(size) {
        for _ in 0..sample_count(face.area(), density) {
            let a = rng.random_range(0.0..1.0);
            let b = rng.random_range(0.0..1.0);
            pts.push(face.origin + face.u * a + face.v * b);
        }
    }
    pts
}

fn ghost_count(g: &GhostTrail) -> usize {
    let len = (Vec3::from(g.end) - Vec3::from(g.start)).norm();
    ((len / GHOST_SPACING).round() as usize).max(1)
}

fn sample_ghost(g: &GhostTrail, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let a = Vec3::from(g.start);
    let b = Vec3::from(g.end);
    let n = ghost_count(g);
    (0..n)
        .map(|i| {
            let t = (i as f64 + rng.random_range(0.0..1.0)) / n as f64;
            a + (b - a) * t + Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05))
        })
        .collect()
}

fn inside(spec: &SceneSpec, x: f64, y: f64, margin: f64) -> bool {
    x.abs() + margin <= spec.extent[0] / 2.0 && y.abs() + margin <= spec.extent[1] / 2.0
}

fn validate_layout(spec: &SceneSpec, layout: &SceneLayout) -> Result<()> {
    for (i, o) in layout.statics.iter().enumerate() {
        let ok = match *o {
            StaticObject::Pole { center, radius, height } => radius > 0.0 && height > 0.0 && inside(spec, center[0], center[1], radius),
            StaticObject::Tree { center, trunk_radius, trunk_height, crown_radius } => {
                trunk_radius > 0.0 && trunk_height > 0.0 && crown_radius > 0.0 && inside(spec, center[0], center[1], crown_radius)
            }
            StaticObject::Wall { start, end, height } => {
                height > 0.0 && inside(spec, start[0], start[1], 0.0) && inside(spec, end[0], end[1], 0.0)
            }
        };
        if !ok {
            return Err(Error::Placement(format!("static object {i} lies outside the scene extent")));
        }
    }
    for (i, car) in layout.cars.iter().enumerate() {
        if car.poses.len() != spec.sessions {
            return Err(Error::param(format!("car {i} schedule has {} entries for {} sessions", car.poses.len(), spec.sessions)));
        }
        let half_diag = 0.5 * car.size[0].hypot(car.size[1]);
        for pose in car.poses.iter().flatten() {
            if !inside(spec, pose.x, pose.y, half_diag) {
                return Err(Error::Placement(format!("car {i} lies outside the scene extent")));
            }
        }
    }
    for (i, g) in layout.ghosts.iter().enumerate() {
        if g.session >= spec.sessions {
            return Err(Error::param(format!("ghost {i} references session {}", g.session)));
        }
        if !inside(spec, g.start[0], g.start[1], 0.0) || !inside(spec, g.end[0], g.end[1], 0.0) {
            return Err(Error::Placement(format!("ghost trail {i} lies outside the scene extent")));
        }
    }
    Ok(())
}

/// Parking slots: two rows of cars parked along y, one slot every 3 m in x.
fn parking_slots(spec: &SceneSpec) -> Vec<[f64; 2]> {
    let [w, h] = spec.extent;
    let half_span = w / 2.0 - 5.0;
    if half_span < 0.0 {
        return Vec::new();
    }
    let columns = (2.0 * half_span / SLOT_PITCH).floor() as usize + 1;
    let row = h / 5.0;
    [-row, row]
        .iter()
        .flat_map(|&y| (0..columns).map(move |c| [-half_span + c as f64 * SLOT_PITCH, y]))
        .collect()
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

fn random_layout(spec: &SceneSpec) -> Result<SceneLayout> {
    let mut rng = stream(spec.seed, STREAM_LAYOUT);
    let [w, h] = spec.extent;
    let mut statics = Vec::new();

    // walls: along the perimeter first (north, south, west, east), then inside
    let mut walls: Vec<([f64; 2], [f64; 2])> = Vec::new();
    for i in 0..spec.walls {
        let (start, end) = match i {
            0 => ([-0.35 * w, h / 2.0 - 1.0], [0.35 * w, h / 2.0 - 1.0]),
            1 => ([-0.35 * w, -h / 2.0 + 1.0], [0.2 * w, -h / 2.0 + 1.0]),
            2 => ([-w / 2.0 + 1.0, -0.3 * h], [-w / 2.0 + 1.0, 0.3 * h]),
            3 => ([w / 2.0 - 1.0, -0.3 * h], [w / 2.0 - 1.0, 0.2 * h]),
            _ => {
                let x = rng.random_range(-w / 2.0 + 2.0..w / 2.0 - 2.0);
                let y = rng.random_range(-h / 2.0 + 2.0..h / 2.0 - 2.0);
                let a = rng.random_range(0.0..TAU);
                let len = rng.random_range(3.0..8.0);
                ([x, y], [x + len * a.cos(), y + len * a.sin()])
            }
        };
        if !inside(spec, start[0], start[1], 0.0) || !inside(spec, end[0], end[1], 0.0) {
            return Err(Error::Placement(format!("wall {i} does not fit the scene extent")));
        }
        walls.push((start, end));
        statics.push(StaticObject::Wall { start, end, height: rng.random_range(4.0..6.0) });
    }

    let slots = parking_slots(spec);
    if spec.cars > 0 && slots.len() < spec.cars {
        return Err(Error::Placement(format!("{} cars do not fit {} parking slots", spec.cars, slots.len())));
    }
    let slot_clear = |p: [f64; 2], r: f64| {
        slots.iter().all(|s| {
            (p[0] - s[0]).abs() > CAR_SIZE[0] / 2.0 + r + CLEARANCE || (p[1] - s[1]).abs() > CAR_SIZE[1] / 2.0 + r + CLEARANCE
        })
    };

    let mut taken: Vec<([f64; 2], f64)> = Vec::new();
    let kinds = std::iter::repeat_n(false, spec.poles).chain(std::iter::repeat_n(true, spec.trees));
    for (i, is_tree) in kinds.enumerate() {
        let reach = if is_tree { 1.8 } else { 0.2 };
        let mut placed = None;
        for _ in 0..10_000 {
            let c = [rng.random_range(-w / 2.0..w / 2.0), rng.random_range(-h / 2.0..h / 2.0)];
            if inside(spec, c[0], c[1], reach + 1.0)
                && slot_clear(c, reach)
                && walls.iter().all(|&(a, b)| segment_distance(c, a, b) > reach + CLEARANCE)
                && taken.iter().all(|&(t, r)| (c[0] - t[0]).hypot(c[1] - t[1]) > reach + r + CLEARANCE)
            {
                placed = Some(c);
                break;
            }
        }
        let center = placed.ok_or_else(|| Error::Placement(format!("no free spot for static object {i}")))?;
        taken.push((center, reach));
        statics.push(if is_tree {
            StaticObject::Tree {
                center,
                trunk_radius: 0.2,
                trunk_height: rng.random_range(2.0..3.0),
                crown_radius: rng.random_range(1.2..1.8),
            }
        } else {
            StaticObject::Pole { center, radius: 0.1, height: rng.random_range(5.0..7.0) }
        });
    }

    // Every car changes slot between any two sessions it appears in, and no
    // slot is occupied in two consecutive sessions, so each parked car faces
    // an empty slot in at least one other session.
    let mut cars: Vec<CarTrack> = (0..spec.cars)
        .map(|_| CarTrack { size: CAR_SIZE, poses: Vec::with_capacity(spec.sessions) })
        .collect();
    let mut used: Vec<Vec<usize>> = vec![Vec::new(); spec.cars];
    let mut previous: Vec<usize> = Vec::new();
    for _ in 0..spec.sessions {
        let mut free: Vec<usize> = (0..slots.len()).filter(|s| !previous.contains(s)).collect();
        let mut occupied = Vec::new();
        for (c, car) in cars.iter_mut().enumerate() {
            if rng.random_range(0.0..1.0) < spec.car_absence {
                car.poses.push(None);
                continue;
            }
            let options: Vec<usize> = free.iter().copied().filter(|s| !used[c].contains(s)).collect();
            if options.is_empty() {
                car.poses.push(None);
                continue;
            }
            let slot = options[rng.random_range(0..options.len())];
            free.retain(|&s| s != slot);
            used[c].push(slot);
            occupied.push(slot);
            let yaw = if rng.random_range(0.0..1.0) < 0.5 { 0.0 } else { PI };
            car.poses.push(Some(Pose2 { x: slots[slot][0], y: slots[slot][1], yaw }));
        }
        previous = occupied;
    }

    let ghosts = (0..spec.ghost_trails)
        .map(|_| {
            let session = rng.random_range(0..spec.sessions);
            let x = rng.random_range(-w / 2.0 + 4.0..w / 2.0 - 4.0);
            let y = rng.random_range(-h / 2.0 + 4.0..h / 2.0 - 4.0);
            let a = rng.random_range(0.0..TAU);
            let len = 8.0f64.min(w.min(h) / 2.0 - 4.0).max(1.0);
            let z = rng.random_range(0.8..1.8);
            let end = [x + len * a.cos(), y + len * a.sin()];
            let end = [
                end[0].clamp(-w / 2.0 + 0.5, w / 2.0 - 0.5),
                end[1].clamp(-h / 2.0 + 0.5, h / 2.0 - 0.5),
            ];
            GhostTrail { session, start: [x, y, z], end: [end[0], end[1], z] }
        })
        .collect();

    Ok(SceneLayout { statics, cars, ghosts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SceneSpec {
        SceneSpec {
            sessions: 3,
            point_density: 5.0,
            seed: 17,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn same_seed_same_bundle() {
        let a = generate_scene(&small_spec()).unwrap();
        let b = generate_scene(&small_spec()).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&SceneSpec { seed: 18, ..small_spec() }).unwrap();
        assert_ne!(a.sessions[0].cloud, c.sessions[0].cloud);
    }

    #[test]
    fn class_counts_match_expectations() {
        let spec = small_spec();
        let bundle = generate_scene(&spec).unwrap();
        for (s, session) in bundle.sessions.iter().enumerate() {
            let gt = session.cloud.ground_truth().unwrap();
            let dynamic = gt.iter().filter(|c| c.is_dynamic()).count();
            assert_eq!((gt.len() - dynamic, dynamic), expected_class_counts(&spec, &bundle.layout, s));
            assert_eq!(session.ground_mask.len(), gt.len());
        }
    }

    #[test]
    fn frames_invert_exactly_and_statics_repeat() {
        let spec = SceneSpec { sensor_noise_sigma: 0.0, ..small_spec() };
        let bundle = generate_scene(&spec).unwrap();
        let world: Vec<PointCloud> = bundle
            .sessions
            .iter()
            .map(|s| {
                let (angle, shift) = s.world_to_session.error_to(&RigidTransform::identity());
                assert!(angle <= spec.max_rotation_deg.to_radians() + 1e-12);
                assert!(shift <= spec.max_translation + 1e-12);
                let round = s.world_to_session.inverse().compose(&s.world_to_session);
                let (a, t) = round.error_to(&RigidTransform::identity());
                assert!(a < 1e-12 && t < 1e-12);
                apply_transform(&s.world_to_session.inverse(), &s.cloud)
            })
            .collect();
        // ground and static objects come first and are identical across sessions
        let n_static = expected_class_counts(&spec, &bundle.layout, 0).0;
        for w in &world[1..] {
            for (a, b) in world[0].points()[..n_static].iter().zip(&w.points()[..n_static]) {
                assert!((a.position - b.position).norm() < 1e-9);
            }
        }
        let t = bundle.true_alignment(1, 0);
        let mapped = apply_transform(&t, &bundle.sessions[1].cloud);
        for (a, b) in mapped.points()[..n_static].iter().zip(&bundle.sessions[0].cloud.points()[..n_static]) {
            assert!((a.position - b.position).norm() < 1e-9);
        }
    }

    #[test]
    fn ghosts_live_in_one_session() {
        let spec = SceneSpec { cars: 0, ghost_trails: 2, ..small_spec() };
        let bundle = generate_scene(&spec).unwrap();
        let per_session: Vec<usize> = bundle
            .sessions
            .iter()
            .map(|s| s.cloud.ground_truth().unwrap().iter().filter(|c| c.is_dynamic()).count())
            .collect();
        let total: usize = bundle.layout.ghosts.iter().map(ghost_count).sum();
        assert_eq!(per_session.iter().sum::<usize>(), total);
    }

    #[test]
    fn cars_never_reuse_a_slot() {
        let bundle = generate_scene(&SceneSpec { sessions: 5, ..small_spec() }).unwrap();
        let at = |s: usize| -> Vec<(f64, f64)> {
            bundle.layout.cars.iter().filter_map(|c| c.poses[s].map(|p| (p.x, p.y))).collect()
        };
        for s in 1..5 {
            assert!(at(s).iter().all(|p| !at(s - 1).contains(p)));
        }
        for car in &bundle.layout.cars {
            let poses: Vec<&Pose2> = car.poses.iter().flatten().collect();
            for i in 0..poses.len() {
                for j in i + 1..poses.len() {
                    assert!(poses[i].x != poses[j].x || poses[i].y != poses[j].y);
                }
            }
        }
    }

    #[test]
    fn impossible_placements_are_errors() {
        let layout = SceneLayout {
            statics: vec![StaticObject::Pole { center: [100.0, 0.0], radius: 0.1, height: 5.0 }],
            ..SceneLayout::default()
        };
        assert!(matches!(generate_scene_with_layout(&small_spec(), layout), Err(Error::Placement(_))));
        let crowded = SceneSpec { cars: 100, ..small_spec() };
        assert!(matches!(generate_scene(&crowded), Err(Error::Placement(_))));
        assert!(generate_scene(&SceneSpec { sessions: 1, ..small_spec() }).is_err());
    }
}
