//! Overlapping fixed-size submaps for model consumption, and the voting layer
//! that fuses overlapping per-point predictions back into one map.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::Vec3;
use crate::error::{Error, Result};
use crate::labelling::LabelledCloud;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TilingParams {
    pub submap_size_xy: f64,
    pub stride_fraction: f64,
    pub points_per_submap: usize,
    pub min_points: usize,
    pub seed: u64,
    /// Guarantee that every point of an emitted tile is sampled at least once:
    /// crowded tiles are split into several disjoint submaps, sparse tiles
    /// include each point once before drawing duplicates.
    pub cover_all: bool,
}

impl Default for TilingParams {
    fn default() -> Self {
        TilingParams {
            submap_size_xy: 10.0,
            stride_fraction: 0.5,
            points_per_submap: 4096,
            min_points: 64,
            seed: 0,
            cover_all: true,
        }
    }
}

impl TilingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.submap_size_xy > 0.0 && self.submap_size_xy.is_finite()) {
            return Err(Error::param("submap_size_xy must be > 0"));
        }
        if !(self.stride_fraction > 0.0 && self.stride_fraction <= 1.0) {
            return Err(Error::param("stride_fraction must be in (0, 1]"));
        }
        if self.points_per_submap == 0 {
            return Err(Error::param("points_per_submap must be >= 1"));
        }
        Ok(())
    }

    pub fn stride(&self) -> f64 {
        self.stride_fraction * self.submap_size_xy
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubmapPoint {
    /// Position relative to the submap center in x and y; z is absolute.
    pub position: Vec3,
    /// Zero when the source map has no normals.
    pub normal: Vec3,
    pub label: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Submap {
    pub tile_origin: [f64; 2],
    /// x-y offset subtracted from every position.
    pub center: [f64; 2],
    pub points: Vec<SubmapPoint>,
    pub source_indices: Vec<usize>,
}

/// Candidate tile grid over a footprint: one row per y origin, each row
/// listing the x origins.
#[derive(Clone, Debug, PartialEq)]
pub struct TileGrid {
    pub x_origins: Vec<f64>,
    pub y_origins: Vec<f64>,
    pub size: f64,
}

impl TileGrid {
    pub fn new(min: [f64; 2], max: [f64; 2], params: &TilingParams) -> Result<Self> {
        params.validate()?;
        let axis = |lo: f64, hi: f64| -> Vec<f64> {
            let span = hi - lo;
            let count = if span <= params.submap_size_xy {
                1
            } else {
                ((span - params.submap_size_xy) / params.stride()).ceil() as usize + 1
            };
            (0..count).map(|i| lo + i as f64 * params.stride()).collect()
        };
        Ok(TileGrid {
            x_origins: axis(min[0], max[0]),
            y_origins: axis(min[1], max[1]),
            size: params.submap_size_xy,
        })
    }

    pub fn len(&self) -> usize {
        self.x_origins.len() * self.y_origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Tile origins in row-major order (y outer).
    pub fn origins(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.y_origins
            .iter()
            .flat_map(move |&y| self.x_origins.iter().map(move |&x| [x, y]))
    }

    /// Footprints are half-open, except that the last tile on each axis also
    /// owns its far edge so the bounding box is fully covered.
    fn axis_contains(origins: &[f64], i: usize, size: f64, v: f64) -> bool {
        let lo = origins[i];
        let hi = lo + size;
        v >= lo && (v < hi || (i + 1 == origins.len() && v <= hi))
    }

    fn axis_hits(origins: &[f64], size: f64, v: f64) -> Vec<usize> {
        (0..origins.len())
            .filter(|&i| Self::axis_contains(origins, i, size, v))
            .collect()
    }

    /// Row-major tile ids whose footprint contains (x, y).
    pub fn tiles_containing(&self, x: f64, y: f64) -> Vec<usize> {
        let xs = Self::axis_hits(&self.x_origins, self.size, x);
        let ys = Self::axis_hits(&self.y_origins, self.size, y);
        let nx = self.x_origins.len();
        ys.iter()
            .flat_map(|&j| xs.iter().map(move |&i| j * nx + i))
            .collect()
    }
}

/// Cuts a labelled map into submaps of exactly `points_per_submap` points.
pub fn tile_submaps(map: &LabelledCloud, params: &TilingParams) -> Result<Vec<Submap>> {
    params.validate()?;
    map.cloud.ensure_non_empty()?;
    let (lo, hi) = map.cloud.bounds().expect("non-empty");
    let grid = TileGrid::new([lo.x, lo.y], [hi.x, hi.y], params)?;

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); grid.len()];
    for (i, p) in map.cloud.points().iter().enumerate() {
        for t in grid.tiles_containing(p.position.x, p.position.y) {
            members[t].push(i);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut submaps = Vec::new();
    for (origin, tile) in grid.origins().zip(&members) {
        if tile.len() < params.min_points || tile.is_empty() {
            continue;
        }
        let center = xy_centroid(map, tile);
        for sample in sample_tile(tile, params, &mut rng) {
            submaps.push(build_submap(map, origin, center, sample));
        }
    }
    Ok(submaps)
}

fn xy_centroid(map: &LabelledCloud, tile: &[usize]) -> [f64; 2] {
    let pts = map.cloud.points();
    let (sx, sy) = tile.iter().fold((0.0, 0.0), |(sx, sy), &i| {
        (sx + pts[i].position.x, sy + pts[i].position.y)
    });
    let n = tile.len() as f64;
    [sx / n, sy / n]
}

fn sample_tile(tile: &[usize], params: &TilingParams, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let n = params.points_per_submap;
    let count = tile.len();
    match (count >= n, params.cover_all) {
        (true, false) => vec![index::sample(rng, count, n)
            .into_iter()
            .map(|k| tile[k])
            .collect()],
        (true, true) => {
            let mut order: Vec<usize> = tile.to_vec();
            order.shuffle(rng);
            let mut out: Vec<Vec<usize>> = order.chunks(n).map(<[usize]>::to_vec).collect();
            let last = out.last_mut().expect("count >= n > 0");
            let missing = n - last.len();
            if missing > 0 {
                // top up from the points outside the final chunk, without repeats
                let head = count - last.len();
                last.extend(
                    index::sample(rng, head, missing)
                        .into_iter()
                        .map(|k| order[k]),
                );
            }
            out
        }
        (false, false) => vec![(0..n).map(|_| tile[rng.random_range(0..count)]).collect()],
        (false, true) => {
            let mut sample: Vec<usize> = tile.to_vec();
            sample.extend((count..n).map(|_| tile[rng.random_range(0..count)]));
            sample.shuffle(rng);
            vec![sample]
        }
    }
}

fn build_submap(map: &LabelledCloud, origin: [f64; 2], center: [f64; 2], sample: Vec<usize>) -> Submap {
    let pts = map.cloud.points();
    let points = sample
        .iter()
        .map(|&i| {
            let p = pts[i].position;
            SubmapPoint {
                position: Vec3::new(p.x - center[0], p.y - center[1], p.z),
                normal: pts[i].normal.unwrap_or_else(Vec3::zeros),
                label: map.labels[i],
            }
        })
        .collect();
    Submap {
        tile_origin: origin,
        center,
        points,
        source_indices: sample,
    }
}

/// Running per-point prediction sums and vote counts.
#[derive(Clone, Debug, PartialEq)]
pub struct VoteAccumulator {
    sum: Vec<f64>,
    count: Vec<u32>,
}

impl VoteAccumulator {
    pub fn new(map_size: usize) -> Self {
        VoteAccumulator {
            sum: vec![0.0; map_size],
            count: vec![0; map_size],
        }
    }

    pub fn len(&self) -> usize {
        self.sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum.is_empty()
    }

    pub fn votes(&self, point: usize) -> u32 {
        self.count[point]
    }

    /// Adds one vote per distinct source point of the submap. Repeated
    /// samples of a point within the submap are averaged into that vote.
    pub fn add(&mut self, source_indices: &[usize], predictions: &[f64]) -> Result<()> {
        if source_indices.len() != predictions.len() {
            return Err(Error::LengthMismatch {
                left: source_indices.len(),
                right: predictions.len(),
            });
        }
        if let Some(&bad) = source_indices.iter().find(|&&i| i >= self.sum.len()) {
            return Err(Error::param(format!(
                "source index {bad} outside map of {} points",
                self.sum.len()
            )));
        }
        if let Some(&bad) = predictions.iter().find(|p| !p.is_finite()) {
            return Err(Error::param(format!("non-finite prediction {bad}")));
        }
        let mut pairs: Vec<(usize, f64)> = source_indices
            .iter()
            .copied()
            .zip(predictions.iter().copied())
            .collect();
        pairs.sort_by_key(|&(i, _)| i);
        for group in pairs.chunk_by(|a, b| a.0 == b.0) {
            let mean = group.iter().map(|&(_, p)| p).sum::<f64>() / group.len() as f64;
            let i = group[0].0;
            self.sum[i] += mean;
            self.count[i] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &VoteAccumulator) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.count[i] += other.count[i];
        }
        Ok(())
    }
}

pub fn accumulate_votes(
    mut acc: VoteAccumulator,
    submap: &Submap,
    predictions: &[f64],
) -> Result<VoteAccumulator> {
    if predictions.len() != submap.points.len() {
        return Err(Error::LengthMismatch {
            left: submap.points.len(),
            right: predictions.len(),
        });
    }
    acc.add(&submap.source_indices, predictions)?;
    Ok(acc)
}

/// Per-point mean prediction; `None` marks points no submap covered.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedScores {
    pub scores: Vec<Option<f64>>,
}

impl ResolvedScores {
    pub fn covered_fraction(&self) -> f64 {
        if self.scores.is_empty() {
            return 0.0;
        }
        self.scores.iter().filter(|s| s.is_some()).count() as f64 / self.scores.len() as f64
    }

    pub fn covered_indices(&self) -> Vec<usize> {
        (0..self.scores.len())
            .filter(|&i| self.scores[i].is_some())
            .collect()
    }
}

pub fn resolve_votes(acc: &VoteAccumulator, map_size: usize) -> Result<ResolvedScores> {
    if acc.len() != map_size {
        return Err(Error::LengthMismatch {
            left: map_size,
            right: acc.len(),
        });
    }
    Ok(ResolvedScores {
        scores: acc
            .sum
            .iter()
            .zip(&acc.count)
            .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{Point, PointCloud};
    use proptest::prelude::*;

    fn labelled(pts: &[Vec3]) -> LabelledCloud {
        let cloud = PointCloud::from_positions("m", pts).unwrap();
        let n = cloud.len();
        LabelledCloud::new(cloud, vec![0.25; n], vec![0.0; n]).unwrap()
    }

    fn uniform_grid(w: f64, h: f64, spacing: f64) -> Vec<Vec3> {
        let mut pts = Vec::new();
        let mut y = 0.0;
        while y <= h {
            let mut x = 0.0;
            while x <= w {
                pts.push(Vec3::new(x, y, 1.0));
                x += spacing;
            }
            y += spacing;
        }
        pts
    }

    #[test]
    fn grid_counts_for_reference_footprint() {
        let grid = TileGrid::new([0.0, 0.0], [40.0, 30.0], &TilingParams::default()).unwrap();
        assert_eq!(grid.x_origins.len(), 7);
        assert_eq!(grid.y_origins.len(), 5);
        let small = TileGrid::new([0.0, 0.0], [3.0, 3.0], &TilingParams::default()).unwrap();
        assert_eq!(small.len(), 1);
    }

    #[test]
    fn interior_point_in_four_tiles() {
        let grid = TileGrid::new([0.0, 0.0], [40.0, 30.0], &TilingParams::default()).unwrap();
        assert_eq!(grid.tiles_containing(17.3, 12.1).len(), 4);
        assert_eq!(grid.tiles_containing(2.0, 2.0).len(), 1);
        assert_eq!(grid.tiles_containing(40.0, 30.0).len(), 1);
    }

    #[test]
    fn no_overlap_means_one_tile_each() {
        let params = TilingParams {
            stride_fraction: 1.0,
            ..TilingParams::default()
        };
        let grid = TileGrid::new([0.0, 0.0], [40.0, 30.0], &params).unwrap();
        for p in uniform_grid(40.0, 30.0, 0.7) {
            assert_eq!(grid.tiles_containing(p.x, p.y).len(), 1);
        }
    }

    #[test]
    fn footprints_cover_bounding_box() {
        for (w, h) in [(40.0, 30.0), (23.7, 11.2), (10.0, 10.0), (55.5, 4.0)] {
            let grid = TileGrid::new([0.0, 0.0], [w, h], &TilingParams::default()).unwrap();
            let last_x = grid.x_origins.last().unwrap() + grid.size;
            let last_y = grid.y_origins.last().unwrap() + grid.size;
            assert!(last_x >= w && last_y >= h);
            for p in uniform_grid(w, h, 0.9) {
                assert!(!grid.tiles_containing(p.x, p.y).is_empty());
            }
        }
    }

    #[test]
    fn submaps_have_exact_size_and_stay_in_footprint() {
        let map = labelled(&uniform_grid(40.0, 30.0, 0.25));
        let params = TilingParams::default();
        let submaps = tile_submaps(&map, &params).unwrap();
        assert!(!submaps.is_empty());
        for s in &submaps {
            assert_eq!(s.points.len(), params.points_per_submap);
            assert_eq!(s.source_indices.len(), params.points_per_submap);
            for (k, &i) in s.source_indices.iter().enumerate() {
                let p = map.cloud.points()[i].position;
                assert!(p.x >= s.tile_origin[0] && p.x <= s.tile_origin[0] + params.submap_size_xy);
                assert!(p.y >= s.tile_origin[1] && p.y <= s.tile_origin[1] + params.submap_size_xy);
                let q = s.points[k].position;
                assert_eq!(q.x + s.center[0], p.x);
                assert_eq!(q.z, p.z);
            }
        }
    }

    #[test]
    fn full_coverage_at_defaults() {
        // dense (> 4096 per tile) and sparse (< 4096 per tile) maps
        for spacing in [0.1, 0.3] {
            let map = labelled(&uniform_grid(40.0, 30.0, spacing));
            let submaps = tile_submaps(&map, &TilingParams::default()).unwrap();
            let mut acc = VoteAccumulator::new(map.len());
            for s in &submaps {
                acc = accumulate_votes(acc, s, &vec![0.5; s.points.len()]).unwrap();
            }
            let resolved = resolve_votes(&acc, map.len()).unwrap();
            assert!(resolved.covered_fraction() >= 0.99);
        }
    }

    #[test]
    fn plain_sampling_without_cover_all() {
        let map = labelled(&uniform_grid(12.0, 12.0, 0.5));
        let params = TilingParams {
            cover_all: false,
            points_per_submap: 100,
            ..TilingParams::default()
        };
        let submaps = tile_submaps(&map, &params).unwrap();
        assert_eq!(submaps.len(), 4);
        for s in &submaps {
            let mut idx = s.source_indices.clone();
            idx.sort_unstable();
            idx.dedup();
            assert_eq!(idx.len(), 100, "sampled without replacement");
        }
    }

    #[test]
    fn sparse_tiles_are_skipped() {
        let pts: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        assert!(tile_submaps(&labelled(&pts), &TilingParams::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn seeded_tiling_is_reproducible() {
        let map = labelled(&uniform_grid(25.0, 25.0, 0.2));
        let params = TilingParams {
            seed: 99,
            ..TilingParams::default()
        };
        assert_eq!(tile_submaps(&map, &params).unwrap(), tile_submaps(&map, &params).unwrap());
        let other = TilingParams { seed: 100, ..params };
        assert_ne!(tile_submaps(&map, &params).unwrap(), tile_submaps(&map, &other).unwrap());
    }

    #[test]
    fn normals_and_labels_are_carried() {
        let cloud = PointCloud::new(
            "n",
            (0..100)
                .map(|i| Point::new(i as f64 * 0.05, 0.0, 0.0).with_normal(Vec3::y()))
                .collect(),
        )
        .unwrap();
        let labels: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let map = LabelledCloud::new(cloud, labels.clone(), vec![0.0; 100]).unwrap();
        let submaps = tile_submaps(&map, &TilingParams::default()).unwrap();
        for s in &submaps {
            for (p, &i) in s.points.iter().zip(&s.source_indices) {
                assert_eq!(p.normal, Vec3::y());
                assert_eq!(p.label, labels[i]);
            }
        }
    }

    #[test]
    fn votes_resolve_to_means() {
        let submap = |idx: Vec<usize>| Submap {
            tile_origin: [0.0, 0.0],
            center: [0.0, 0.0],
            points: vec![
                SubmapPoint {
                    position: Vec3::zeros(),
                    normal: Vec3::zeros(),
                    label: 0.0,
                };
                idx.len()
            ],
            source_indices: idx,
        };
        let mut acc = VoteAccumulator::new(3);
        acc = accumulate_votes(acc, &submap(vec![0]), &[0.7]).unwrap();
        acc = accumulate_votes(acc, &submap(vec![1]), &[0.2]).unwrap();
        acc = accumulate_votes(acc, &submap(vec![1]), &[0.8]).unwrap();
        let r = resolve_votes(&acc, 3).unwrap();
        assert!((r.scores[0].unwrap() - 0.7).abs() < 1e-15);
        assert!((r.scores[1].unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(r.scores[2], None);

        let mut three = VoteAccumulator::new(1);
        for v in [0.2, 0.8, 0.5] {
            three = accumulate_votes(three, &submap(vec![0]), &[v]).unwrap();
        }
        assert!((resolve_votes(&three, 1).unwrap().scores[0].unwrap() - 0.5).abs() < 1e-15);

        // duplicates inside one submap collapse into one vote
        let mut dup = VoteAccumulator::new(1);
        dup = accumulate_votes(dup, &submap(vec![0, 0]), &[0.4, 0.4]).unwrap();
        assert_eq!(dup.votes(0), 1);

        assert!(accumulate_votes(VoteAccumulator::new(1), &submap(vec![0]), &[0.1, 0.2]).is_err());
        assert!(resolve_votes(&VoteAccumulator::new(2), 3).is_err());
    }

    proptest! {
        #[test]
        fn voting_matches_brute_force(seed in 0u64..300) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..40);
            let tiles: Vec<(Vec<usize>, Vec<f64>)> = (0..rng.random_range(1..12))
                .map(|_| {
                    let len = rng.random_range(1..30);
                    let idx: Vec<usize> = (0..len).map(|_| rng.random_range(0..n)).collect();
                    let preds: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1.0)).collect();
                    (idx, preds)
                })
                .collect();

            let mut acc = VoteAccumulator::new(n);
            for (idx, preds) in &tiles {
                acc.add(idx, preds).unwrap();
            }
            let got = resolve_votes(&acc, n).unwrap();

            // brute force: one vote per (tile, point), the mean of that tile's samples
            let mut table: Vec<Vec<f64>> = vec![Vec::new(); n];
            for (idx, preds) in &tiles {
                for point in 0..n {
                    let mine: Vec<f64> = idx.iter().zip(preds).filter(|(i, _)| **i == point).map(|(_, p)| *p).collect();
                    if !mine.is_empty() {
                        table[point].push(mine.iter().sum::<f64>() / mine.len() as f64);
                    }
                }
            }
            for point in 0..n {
                match got.scores[point] {
                    None => prop_assert!(table[point].is_empty()),
                    Some(s) => {
                        let want = table[point].iter().sum::<f64>() / table[point].len() as f64;
                        prop_assert!((s - want).abs() <= 1e-12);
                    }
                }
            }
        }

        #[test]
        fn merge_is_order_independent(seed in 0u64..100) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 10;
            let mut parts: Vec<VoteAccumulator> = Vec::new();
            for _ in 0..3 {
                let mut a = VoteAccumulator::new(n);
                let idx: Vec<usize> = (0..5).map(|_| rng.random_range(0..n)).collect();
                let preds: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
                a.add(&idx, &preds).unwrap();
                parts.push(a);
            }
            let mut left = parts[0].clone();
            left.merge(&parts[1]).unwrap();
            left.merge(&parts[2]).unwrap();
            let mut right = parts[2].clone();
            right.merge(&parts[0]).unwrap();
            right.merge(&parts[1]).unwrap();
            let a = resolve_votes(&left, n).unwrap();
            let b = resolve_votes(&right, n).unwrap();
            for (x, y) in a.scores.iter().zip(&b.scores) {
                match (x, y) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                    (None, None) => {}
                    _ => prop_assert!(false),
                }
            }
        }
    }
}
