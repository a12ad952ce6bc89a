//! Cloth simulation ground filter.
//!
//! The cloud is flipped upside down and a cloth of particles connected by
//! springs is dropped onto it. Particles that hit the flipped surface are
//! pinned; rigid springs keep the cloth from sinking into the gaps left by
//! objects. After settling, points close to the cloth are ground.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

const GRAVITY: f64 = 0.2;
const DAMPING: f64 = 0.01;
/// Extra cloth cells around the cloud footprint.
const BORDER_CELLS: usize = 2;
/// Height of the cloth above the highest flipped point at release.
const RELEASE_CLEARANCE: f64 = 0.05;
/// Largest particle displacement at which the cloth counts as settled.
const SETTLED_DISPLACEMENT: f64 = 0.005;

/// Displacement fractions for a spring whose two ends are both free
/// (`0.5 * (1 - 0.4^r)`) or with one end pinned (`1 - 0.7^r`), for rigidness r.
const TWO_FREE_MOVE: [f64; 3] = [0.3, 0.42, 0.468];
const ONE_FREE_MOVE: [f64; 3] = [0.3, 0.51, 0.657];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsfParams {
    pub cloth_resolution: f64,
    pub rigidness: u8,
    pub iterations: usize,
    pub class_threshold: f64,
    pub time_step: f64,
}

impl Default for CsfParams {
    fn default() -> Self {
        CsfParams {
            cloth_resolution: 0.5,
            rigidness: 2,
            iterations: 500,
            class_threshold: 0.5,
            time_step: 0.65,
        }
    }
}

impl CsfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cloth_resolution > 0.0 && self.cloth_resolution.is_finite()) {
            return Err(Error::param("csf cloth_resolution must be > 0"));
        }
        if !(1..=3).contains(&self.rigidness) {
            return Err(Error::param("csf rigidness must be 1, 2 or 3"));
        }
        if self.iterations == 0 {
            return Err(Error::param("csf iterations must be >= 1"));
        }
        if !(self.class_threshold > 0.0) {
            return Err(Error::param("csf class_threshold must be > 0"));
        }
        if !(self.time_step > 0.0 && self.time_step.is_finite()) {
            return Err(Error::param("csf time_step must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GroundSplit {
    pub offground: PointCloud,
    pub ground: PointCloud,
    pub offground_indices: Vec<usize>,
    pub ground_indices: Vec<usize>,
}

pub fn remove_ground_csf(cloud: &PointCloud, params: &CsfParams) -> Result<GroundSplit> {
    let mask = classify_ground_csf(cloud, params)?;
    let (ground_indices, offground_indices): (Vec<usize>, Vec<usize>) =
        (0..cloud.len()).partition(|&i| mask[i]);
    Ok(GroundSplit {
        offground: cloud.select(&offground_indices),
        ground: cloud.select(&ground_indices),
        offground_indices,
        ground_indices,
    })
}

/// Per-point ground mask.
pub fn classify_ground_csf(cloud: &PointCloud, params: &CsfParams) -> Result<Vec<bool>> {
    params.validate()?;
    cloud.ensure_non_empty()?;
    if cloud.len() < 4 {
        return Err(Error::TooSmallForGround(cloud.len()));
    }

    // Flipped heights; the cloth falls in -h.
    let xy: Vec<[f64; 2]> = cloud.positions().map(|p| [p.x, p.y]).collect();
    let flipped: Vec<f64> = cloud.positions().map(|p| -p.z).collect();

    let (lo, hi) = cloud.bounds().expect("non-empty");
    let mut cloth = Cloth::new(lo.x, lo.y, hi.x, hi.y, params.cloth_resolution);
    cloth.assign_collision_heights(&xy, &flipped);
    cloth.simulate(params);

    Ok(xy
        .iter()
        .zip(&flipped)
        .map(|(p, h)| (h - cloth.height_at(p[0], p[1])).abs() <= params.class_threshold)
        .collect())
}

struct Cloth {
    origin: [f64; 2],
    resolution: f64,
    width: usize,
    depth: usize,
    height: Vec<f64>,
    previous: Vec<f64>,
    movable: Vec<bool>,
    collision: Vec<f64>,
}

impl Cloth {
    fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64, resolution: f64) -> Self {
        let cells = |span: f64| (span / resolution).ceil() as usize + 2 * BORDER_CELLS + 1;
        let width = cells(max_x - min_x);
        let depth = cells(max_y - min_y);
        let border = BORDER_CELLS as f64 * resolution;
        let n = width * depth;
        Cloth {
            origin: [min_x - border, min_y - border],
            resolution,
            width,
            depth,
            height: vec![0.0; n],
            previous: vec![0.0; n],
            movable: vec![true; n],
            collision: vec![f64::NAN; n],
        }
    }

    fn node(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    /// Each particle collides at the height of the flipped point nearest to it
    /// in x-y. Particles with no nearby point inherit from the closest
    /// particle that has one.
    fn assign_collision_heights(&mut self, xy: &[[f64; 2]], flipped: &[f64]) {
        let mut nearest = vec![f64::INFINITY; self.height.len()];
        for (p, &h) in xy.iter().zip(flipped) {
            let fi = (p[0] - self.origin[0]) / self.resolution;
            let fj = (p[1] - self.origin[1]) / self.resolution;
            let i = (fi.round() as usize).min(self.width - 1);
            let j = (fj.round() as usize).min(self.depth - 1);
            let d2 = (fi - i as f64).powi(2) + (fj - j as f64).powi(2);
            let k = self.node(i, j);
            if d2 < nearest[k] {
                nearest[k] = d2;
                self.collision[k] = h;
            }
        }

        let mut queue: VecDeque<usize> = (0..self.collision.len())
            .filter(|&k| !self.collision[k].is_nan())
            .collect();
        while let Some(k) = queue.pop_front() {
            let (i, j) = (k % self.width, k / self.width);
            let value = self.collision[k];
            for (ni, nj) in grid_neighbours(i, j, self.width, self.depth) {
                let nk = self.node(ni, nj);
                if self.collision[nk].is_nan() {
                    self.collision[nk] = value;
                    queue.push_back(nk);
                }
            }
        }

        let top = self
            .collision
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            + RELEASE_CLEARANCE;
        self.height.fill(top);
        self.previous.fill(top);
    }

    fn springs(&self) -> Vec<(usize, usize)> {
        // structural, shear and bending springs
        const OFFSETS: [(usize, isize); 6] = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 0), (0, 2)];
        let mut springs = Vec::new();
        for j in 0..self.depth {
            for i in 0..self.width {
                for &(di, dj) in &OFFSETS {
                    let ni = i + di;
                    let nj = j as isize + dj;
                    if ni < self.width && nj >= 0 && (nj as usize) < self.depth {
                        springs.push((self.node(i, j), self.node(ni, nj as usize)));
                    }
                }
            }
        }
        springs
    }

    fn simulate(&mut self, params: &CsfParams) {
        let springs = self.springs();
        let rigid = usize::from(params.rigidness) - 1;
        let two_free = TWO_FREE_MOVE[rigid];
        let one_free = ONE_FREE_MOVE[rigid];
        let drop = GRAVITY * params.time_step * params.time_step;

        for _ in 0..params.iterations {
            for k in 0..self.height.len() {
                if self.movable[k] {
                    let z = self.height[k];
                    self.height[k] = z + (z - self.previous[k]) * (1.0 - DAMPING) - drop;
                    self.previous[k] = z;
                }
            }

            for &(a, b) in &springs {
                let correction = self.height[b] - self.height[a];
                match (self.movable[a], self.movable[b]) {
                    (true, true) => {
                        self.height[a] += correction * two_free;
                        self.height[b] -= correction * two_free;
                    }
                    (true, false) => self.height[a] += correction * one_free,
                    (false, true) => self.height[b] -= correction * one_free,
                    (false, false) => {}
                }
            }

            let mut max_step: f64 = 0.0;
            for k in 0..self.height.len() {
                if self.movable[k] {
                    max_step = max_step.max((self.height[k] - self.previous[k]).abs());
                    if self.height[k] < self.collision[k] {
                        self.height[k] = self.collision[k];
                        self.movable[k] = false;
                    }
                }
            }
            if max_step == 0.0 || max_step < SETTLED_DISPLACEMENT {
                break;
            }
        }
    }

    /// Bilinear cloth height under (x, y).
    fn height_at(&self, x: f64, y: f64) -> f64 {
        let fx = ((x - self.origin[0]) / self.resolution).clamp(0.0, (self.width - 1) as f64);
        let fy = ((y - self.origin[1]) / self.resolution).clamp(0.0, (self.depth - 1) as f64);
        let i = (fx.floor() as usize).min(self.width - 2);
        let j = (fy.floor() as usize).min(self.depth - 2);
        let tx = fx - i as f64;
        let ty = fy - j as f64;
        let h00 = self.height[self.node(i, j)];
        let h10 = self.height[self.node(i + 1, j)];
        let h01 = self.height[self.node(i, j + 1)];
        let h11 = self.height[self.node(i + 1, j + 1)];
        (h00 * (1.0 - tx) + h10 * tx) * (1.0 - ty) + (h01 * (1.0 - tx) + h11 * tx) * ty
    }
}

fn grid_neighbours(i: usize, j: usize, width: usize, depth: usize) -> impl Iterator<Item = (usize, usize)> {
    let mut out = Vec::with_capacity(4);
    if i > 0 {
        out.push((i - 1, j));
    }
    if i + 1 < width {
        out.push((i + 1, j));
    }
    if j > 0 {
        out.push((i, j - 1));
    }
    if j + 1 < depth {
        out.push((i, j + 1));
    }
    out.into_iter()
}
