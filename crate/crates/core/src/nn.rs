//! Exact nearest-neighbour search over a static point set.
//!
//! A median-split kd-tree with small leaf buckets. Queries are exact: the
//! returned distance is the true minimum, and equal distances resolve to the
//! lowest point index so results never depend on tree layout.

use alloc::vec::Vec;

use nalgebra::Point3;
use thiserror::Error;

use crate::cloud::PointCloud;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NnError {
    #[error("cannot index an empty point set")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// Immutable once built; shareable across threads.
#[derive(Debug, Clone)]
pub struct NnIndex {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl NnIndex {
    pub fn build(points: &[Point3<f64>]) -> Result<Self, NnError> {
        if points.is_empty() {
            return Err(NnError::Empty);
        }
        let mut index = Self {
            points: points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        index.build_node(0, points.len());
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> Point3<f64> {
        let p = self.points[index];
        Point3::new(p[0], p[1], p[2])
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let dim = self.widest_dim(start, end);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| points[a][dim].total_cmp(&points[b][dim]));
        let value = self.points[self.order[mid]][dim];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { dim, value, left, right };
        id
    }

    fn widest_dim(&self, start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for d in 0..3 {
                lo[d] = lo[d].min(self.points[i][d]);
                hi[d] = hi[d].max(self.points[i][d]);
            }
        }
        let spread = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        let mut best = 0;
        for d in 1..3 {
            if spread[d] > spread[best] {
                best = d;
            }
        }
        best
    }

    /// Closest stored point to `q`.
    pub fn nearest(&self, q: &Point3<f64>) -> Neighbor {
        let q = [q.x, q.y, q.z];
        let mut best = (f64::INFINITY, usize::MAX);
        self.search_one(0, &q, &mut best);
        Neighbor {
            index: best.1,
            distance: libm::sqrt(best.0),
        }
    }

    fn search_one(&self, node: usize, q: &[f64; 3], best: &mut (f64, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = dist2(&self.points[i], q);
                    if d2 < best.0 || (d2 == best.0 && i < best.1) {
                        *best = (d2, i);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search_one(near, q, best);
                if diff * diff <= best.0 {
                    self.search_one(far, q, best);
                }
            }
        }
    }

    /// The `k` closest points ordered by (distance, index). Returns fewer than
    /// `k` when the index holds fewer points.
    pub fn k_nearest(&self, q: &Point3<f64>, k: usize) -> Vec<Neighbor> {
        if k == 0 {
            return Vec::new();
        }
        let q = [q.x, q.y, q.z];
        let mut heap: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        self.search_k(0, &q, k, &mut heap);
        heap.into_iter()
            .map(|(d2, index)| Neighbor {
                index,
                distance: libm::sqrt(d2),
            })
            .collect()
    }

    fn search_k(&self, node: usize, q: &[f64; 3], k: usize, found: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = (dist2(&self.points[i], q), i);
                    if found.len() == k {
                        let worst = found[k - 1];
                        if !lex_less(cand, worst) {
                            continue;
                        }
                        found.pop();
                    }
                    let pos = found.partition_point(|&e| lex_less(e, cand));
                    found.insert(pos, cand);
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search_k(near, q, k, found);
                if found.len() < k || diff * diff <= found[k - 1].0 {
                    self.search_k(far, q, k, found);
                }
            }
        }
    }
}

fn lex_less(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    dx * dx + dy * dy + dz * dz
}

pub fn build_index(cloud: &PointCloud) -> Result<NnIndex, NnError> {
    NnIndex::build(&cloud.points)
}
