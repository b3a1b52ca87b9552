//! Spatial indices: a static k-d tree over points and a bounding-volume
//! hierarchy over triangles for closest-point queries.
//!
//! Both structures break distance ties toward the lowest index so that
//! query results are reproducible.

use crate::geom::{self, Vec3};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum KdNode {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static 3-d tree for nearest-neighbour queries.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<KdNode>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(KdNode::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            let p = self.points[i];
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(KdNode::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = KdNode::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// Nearest stored point to `q`: `(index, squared distance)`.
    ///
    /// Panics on an empty tree.
    pub fn nearest(&self, q: Vec3) -> (usize, f64) {
        assert!(!self.points.is_empty(), "nearest() on empty KdTree");
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        best
    }

    /// Whether any stored point lies within `radius` (inclusive) of `q`.
    pub fn within(&self, q: Vec3, radius: f64) -> bool {
        let (_, d2) = self.nearest(q);
        d2 <= radius * radius
    }

    fn search(&self, node: usize, q: Vec3, best: &mut (usize, f64)) {
        match self.nodes[node] {
            KdNode::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = geom::dist2(q, self.points[i]);
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            KdNode::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // `<=` keeps equal-distance candidates with lower indices reachable.
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct BvhNode {
    lo: Vec3,
    hi: Vec3,
    // Leaf when `count > 0`: faces order[first..first+count]; otherwise
    // children at `first` and `first + 1`.
    first: usize,
    count: usize,
}

/// Closest-point result on a triangle set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestHit {
    pub face: usize,
    pub barycentric: [f64; 3],
    pub position: Vec3,
    pub dist2: f64,
}

/// Bounding-volume hierarchy over triangles (median split on centroids).
#[derive(Debug, Clone)]
pub struct TriangleBvh {
    tris: Vec<[Vec3; 3]>,
    order: Vec<usize>,
    nodes: Vec<BvhNode>,
}

impl TriangleBvh {
    pub fn new(tris: Vec<[Vec3; 3]>) -> Self {
        let n = tris.len();
        let mut bvh = TriangleBvh {
            tris,
            order: (0..n).collect(),
            nodes: Vec::with_capacity(2 * n / 4 + 1),
        };
        if n > 0 {
            let centroids: Vec<Vec3> = bvh
                .tris
                .iter()
                .map(|t| geom::scale(geom::add(geom::add(t[0], t[1]), t[2]), 1.0 / 3.0))
                .collect();
            bvh.nodes.push(BvhNode {
                lo: [0.0; 3],
                hi: [0.0; 3],
                first: 0,
                count: 0,
            });
            bvh.build(0, 0, n, &centroids);
        }
        bvh
    }

    fn bounds(&self, start: usize, end: usize) -> (Vec3, Vec3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &f in &self.order[start..end] {
            for p in &self.tris[f] {
                for k in 0..3 {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
        }
        (lo, hi)
    }

    fn build(&mut self, node: usize, start: usize, end: usize, centroids: &[Vec3]) {
        let (lo, hi) = self.bounds(start, end);
        if end - start <= 4 {
            self.nodes[node] = BvhNode {
                lo,
                hi,
                first: start,
                count: end - start,
            };
            return;
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis]
                .total_cmp(&centroids[b][axis])
                .then(a.cmp(&b))
        });
        let first = self.nodes.len();
        let placeholder = BvhNode {
            lo: [0.0; 3],
            hi: [0.0; 3],
            first: 0,
            count: 0,
        };
        self.nodes.push(placeholder.clone());
        self.nodes.push(placeholder);
        self.nodes[node] = BvhNode {
            lo,
            hi,
            first,
            count: 0,
        };
        self.build(first, start, mid, centroids);
        self.build(first + 1, mid, end, centroids);
    }

    pub fn len(&self) -> usize {
        self.tris.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    /// Exact closest point on the triangle set. Ties go to the lowest face id.
    pub fn closest(&self, q: Vec3) -> Option<ClosestHit> {
        if self.tris.is_empty() {
            return None;
        }
        let mut best: Option<ClosestHit> = None;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let bound = geom::aabb_dist2(q, node.lo, node.hi);
            if let Some(b) = &best {
                if bound > b.dist2 {
                    continue;
                }
            }
            if node.count > 0 {
                for &f in &self.order[node.first..node.first + node.count] {
                    let hit = closest_on(&self.tris[f], f, q);
                    let better = match &best {
                        None => true,
                        Some(b) => hit.dist2 < b.dist2 || (hit.dist2 == b.dist2 && f < b.face),
                    };
                    if better {
                        best = Some(hit);
                    }
                }
            } else {
                let (a, b) = (node.first, node.first + 1);
                let da = geom::aabb_dist2(q, self.nodes[a].lo, self.nodes[a].hi);
                let db = geom::aabb_dist2(q, self.nodes[b].lo, self.nodes[b].hi);
                // Visit the nearer child first (pushed last).
                if da <= db {
                    stack.push(b);
                    stack.push(a);
                } else {
                    stack.push(a);
                    stack.push(b);
                }
            }
        }
        best
    }
}

pub(crate) fn closest_on(tri: &[Vec3; 3], face: usize, q: Vec3) -> ClosestHit {
    let w = geom::closest_point_on_triangle(q, tri[0], tri[1], tri[2]);
    let position = geom::lerp3(tri[0], tri[1], tri[2], w);
    ClosestHit {
        face,
        barycentric: w,
        position,
        dist2: geom::dist2(q, position),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kdtree_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| [rng.random(), rng.random(), rng.random()])
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..200 {
            let q = [rng.random(), rng.random(), rng.random()];
            let brute = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, geom::dist2(q, *p)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .unwrap();
            assert_eq!(tree.nearest(q), brute);
        }
    }

    #[test]
    fn kdtree_ties_go_to_lowest_index() {
        let pts = vec![[1.0, 0.0, 0.0]; 20];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest([0.0, 0.0, 0.0]).0, 0);
    }
}
