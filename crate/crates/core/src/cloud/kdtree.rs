use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{PointCloud, Vec3};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Clone, Debug)]
enum Node {
    Leaf {
        start: u32,
        end: u32,
    },
    Split {
        axis: u8,
        value: f64,
        left: u32,
        right: u32,
    },
}

/// Exact nearest-neighbour index over a fixed set of points.
///
/// Ties between equidistant points resolve to the lowest point index, so
/// queries are deterministic regardless of build order.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    coords: Vec<[f64; 3]>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

pub fn build_index(cloud: &PointCloud) -> Result<SpatialIndex> {
    SpatialIndex::build(cloud)
}

pub fn nearest_distance(index: &SpatialIndex, q: &Vec3) -> f64 {
    index.nearest_distance(q)
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        let positions: Vec<Vec3> = cloud.positions().collect();
        Self::from_positions(&positions)
    }

    pub fn from_positions(positions: &[Vec3]) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if positions.len() > u32::MAX as usize {
            return Err(Error::param("too many points for spatial index"));
        }
        let coords: Vec<[f64; 3]> = positions.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut order: Vec<u32> = (0..coords.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * coords.len() / LEAF_SIZE + 1);
        build_node(&coords, &mut order, 0, &mut nodes);
        Ok(SpatialIndex {
            coords,
            order,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn position(&self, index: usize) -> Vec3 {
        let c = self.coords[index];
        Vec3::new(c[0], c[1], c[2])
    }

    pub fn nearest(&self, q: &Vec3) -> Neighbor {
        let q = [q.x, q.y, q.z];
        let mut best = (f64::INFINITY, u32::MAX);
        self.nearest_in(0, &q, &mut best);
        Neighbor {
            index: best.1 as usize,
            distance: best.0.sqrt(),
        }
    }

    pub fn nearest_distance(&self, q: &Vec3) -> f64 {
        self.nearest(q).distance
    }

    /// The `k` nearest points sorted by increasing distance (then index).
    /// Returns every point when `k` exceeds the index size.
    pub fn k_nearest(&self, q: &Vec3, k: usize) -> Vec<Neighbor> {
        let k = k.min(self.coords.len());
        if k == 0 {
            return Vec::new();
        }
        let q = [q.x, q.y, q.z];
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_in(0, &q, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter()
            .map(|c| Neighbor {
                index: c.index as usize,
                distance: c.dist2.sqrt(),
            })
            .collect()
    }

    fn nearest_in(&self, node: usize, q: &[f64; 3], best: &mut (f64, u32)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let d2 = dist2(&self.coords[i as usize], q);
                    if d2 < best.0 || (d2 == best.0 && i < best.1) {
                        *best = (d2, i);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_in(near as usize, q, best);
                if diff * diff <= best.0 {
                    self.nearest_in(far as usize, q, best);
                }
            }
        }
    }

    fn knn_in(&self, node: usize, q: &[f64; 3], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let c = Candidate {
                        dist2: dist2(&self.coords[i as usize], q),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_in(near as usize, q, k, heap);
                let worst = if heap.len() < k {
                    f64::INFINITY
                } else {
                    heap.peek().map_or(f64::INFINITY, |c| c.dist2)
                };
                if diff * diff <= worst {
                    self.knn_in(far as usize, q, k, heap);
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    dist2: f64,
    index: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Builds the subtree over `order[offset..offset + slice.len()]` and returns
/// its node id.
fn build_node(coords: &[[f64; 3]], order: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> u32 {
    let id = nodes.len() as u32;
    let len = order.len();
    if len <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + len) as u32,
        });
        return id;
    }

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let c = &coords[i as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
        .unwrap_or(0);
    if hi[axis] - lo[axis] == 0.0 {
        // every point coincides
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + len) as u32,
        });
        return id;
    }

    let mid = len / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        coords[a as usize][axis]
            .total_cmp(&coords[b as usize][axis])
            .then(a.cmp(&b))
    });
    let value = coords[order[mid] as usize][axis];

    nodes.push(Node::Split {
        axis: axis as u8,
        value,
        left: 0,
        right: 0,
    });
    let (left_slice, right_slice) = order.split_at_mut(mid);
    let left = build_node(coords, left_slice, offset, nodes);
    let right = build_node(coords, right_slice, offset + mid, nodes);
    if let Node::Split {
        left: l, right: r, ..
    } = &mut nodes[id as usize]
    {
        *l = left;
        *r = right;
    }
    id
}
