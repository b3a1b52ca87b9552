//! Mesh and point-cloud types plus the geometric primitives built on them.

mod collapse;
mod hull;
mod partition;
mod project;
mod remesh;
mod sample;
mod topology;

use std::collections::HashMap;

pub use collapse::CollapseMesh;
pub use hull::convex_hull;
pub use partition::{merge_partitions, partition_mesh, MeshPartition, MeshPart};
pub use project::{project_point_to_mesh, project_point_brute_force, MeshProjector};
pub use remesh::{
    decimate_qem, longest_edge_split, midpoint_subdivide, remesh_to_resolution,
    BuiltinRemesher, Remesher,
};
pub use sample::{sample_surface, sample_surface_with_normals};
pub use topology::{build_edge_topology, EdgeTopology, INVALID};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};

/// Minimum face area accepted by [`TriangleMesh::validate`], in the
/// scale-normalized frame.
pub const MIN_FACE_AREA: f64 = 1e-12;

/// Input points with optional per-point RGB in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    pub colors: Option<Vec<[f64; 3]>>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vec3>, colors: Option<Vec<[f64; 3]>>) -> Result<Self> {
        if positions.len() < 4 {
            return Err(Error::InvalidData(format!(
                "point cloud needs at least 4 points, got {}",
                positions.len()
            )));
        }
        if let Some(i) = positions.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidData(format!("point {i} has a non-finite coordinate")));
        }
        if let Some(colors) = &colors {
            if colors.len() != positions.len() {
                return Err(Error::InvalidData(format!(
                    "{} colors for {} points",
                    colors.len(),
                    positions.len()
                )));
            }
            if let Some(i) = colors
                .iter()
                .position(|c| c.iter().any(|v| !(0.0..=1.0).contains(v)))
            {
                return Err(Error::InvalidData(format!("color {i} outside [0, 1]")));
            }
        }
        Ok(PointCloud { positions, colors })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn has_colors(&self) -> bool {
        self.colors.is_some()
    }

    /// Frame that maps this cloud to centroid-at-origin, longest bbox side 1.
    pub fn normalizing_frame(&self) -> Frame {
        Frame::normalizing(&self.positions)
    }

    pub fn transformed(&self, frame: &Frame) -> PointCloud {
        PointCloud {
            positions: self.positions.iter().map(|&p| frame.apply(p)).collect(),
            colors: self.colors.clone(),
        }
    }
}

/// Similarity transform `x -> (x - center) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub center: Vec3,
    pub scale: f64,
}

impl Frame {
    pub const IDENTITY: Frame = Frame {
        center: [0.0; 3],
        scale: 1.0,
    };

    /// Centroid to origin, longest axis-aligned extent to 1.
    pub fn normalizing(points: &[Vec3]) -> Frame {
        if points.is_empty() {
            return Frame::IDENTITY;
        }
        let n = points.len() as f64;
        let mut c = [0.0; 3];
        for p in points {
            c = geom::add(c, *p);
        }
        let center = geom::scale(c, 1.0 / n);
        let extent = longest_extent(points);
        let scale = if extent > 0.0 { 1.0 / extent } else { 1.0 };
        Frame { center, scale }
    }

    #[inline]
    pub fn apply(&self, p: Vec3) -> Vec3 {
        geom::scale(geom::sub(p, self.center), self.scale)
    }

    #[inline]
    pub fn invert(&self, p: Vec3) -> Vec3 {
        geom::add(geom::scale(p, 1.0 / self.scale), self.center)
    }
}

/// Per-axis extents of the bounding box of `points`.
pub fn bbox_extents(points: &[Vec3]) -> Vec3 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    if points.is_empty() {
        return [0.0; 3];
    }
    geom::sub(hi, lo)
}

pub fn longest_extent(points: &[Vec3]) -> f64 {
    let e = bbox_extents(points);
    e[0].max(e[1]).max(e[2])
}

/// Indexed triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh and checks every invariant (see [`Self::validate`]).
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = TriangleMesh { vertices, faces };
        let problems = mesh.validate();
        if problems.is_empty() {
            Ok(mesh)
        } else {
            Err(Error::InvalidData(problems.join("; ")))
        }
    }

    /// Builds a mesh without checking invariants. Used for intermediate
    /// states of deformation where faces may transiently degenerate.
    pub fn from_raw(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Self {
        TriangleMesh { vertices, faces }
    }

    /// Lists violated invariants; empty when the mesh is valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let nv = self.vertices.len();
        let mut used = vec![false; nv];
        if self.faces.is_empty() {
            out.push("mesh has no faces".to_string());
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if v.iter().any(|c| !c.is_finite()) {
                out.push(format!("vertex {i} is not finite"));
                break;
            }
        }
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= nv) {
                out.push(format!("face {fi} references a vertex out of range"));
                continue;
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                out.push(format!("face {fi} repeats a vertex"));
                continue;
            }
            for &v in f {
                used[v] = true;
            }
            if self.face_area(fi) <= MIN_FACE_AREA {
                out.push(format!("face {fi} has area <= {MIN_FACE_AREA:e}"));
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            out.push(format!("vertex {v} is not referenced by any face"));
        }
        out
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    #[inline]
    pub fn face_points(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_points(f);
        geom::tri_area(a, b, c)
    }

    pub fn face_areas(&self) -> Vec<f64> {
        (0..self.faces.len()).map(|f| self.face_area(f)).collect()
    }

    pub fn surface_area(&self) -> f64 {
        self.face_areas().iter().sum()
    }

    /// Unit normal of face `f` (zero for degenerate faces).
    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.face_points(f);
        geom::normalize(geom::tri_normal(a, b, c))
    }

    /// Undirected edges, each as `(min, max)`, in first-seen order.
    pub fn unique_edges(&self) -> Vec<[usize; 2]> {
        let mut seen = HashMap::with_capacity(self.faces.len() * 2);
        let mut edges = Vec::with_capacity(self.faces.len() * 3 / 2);
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                if seen.insert(key, ()).is_none() {
                    edges.push([key.0, key.1]);
                }
            }
        }
        edges
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.unique_edges().len() as i64 + self.faces.len() as i64
    }

    /// Closed, consistently oriented 2-manifold: every directed edge appears
    /// exactly once and its reverse exactly once.
    pub fn is_watertight(&self) -> bool {
        if self.faces.is_empty() {
            return false;
        }
        let mut directed: HashMap<(usize, usize), u32> = HashMap::with_capacity(self.faces.len() * 3);
        for f in &self.faces {
            for k in 0..3 {
                *directed.entry((f[k], f[(k + 1) % 3])).or_default() += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
            && self.vertex_manifold()
    }

    // Each vertex's incident faces form a single fan.
    fn vertex_manifold(&self) -> bool {
        let mut next: HashMap<(usize, usize), usize> = HashMap::with_capacity(self.faces.len() * 3);
        let mut degree = vec![0usize; self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let v = f[k];
                degree[v] += 1;
                // around v: edge (v -> a) is followed by (v -> b)
                next.insert((v, f[(k + 1) % 3]), f[(k + 2) % 3]);
            }
        }
        let mut visited = vec![false; self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let v = f[k];
                if visited[v] {
                    continue;
                }
                visited[v] = true;
                let start = f[(k + 1) % 3];
                let mut cur = start;
                let mut count = 0;
                loop {
                    match next.get(&(v, cur)) {
                        Some(&n) => cur = n,
                        None => return false,
                    }
                    count += 1;
                    if cur == start || count > degree[v] {
                        break;
                    }
                }
                if count != degree[v] {
                    return false;
                }
            }
        }
        true
    }

    /// Signed enclosed volume (positive for outward-oriented closed meshes).
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let (a, b, c) = (self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]);
                geom::dot(a, geom::cross(b, c)) / 6.0
            })
            .sum()
    }

    pub fn mean_edge_length(&self) -> f64 {
        let edges = self.unique_edges();
        if edges.is_empty() {
            return 0.0;
        }
        edges
            .iter()
            .map(|e| geom::norm(geom::sub(self.vertices[e[0]], self.vertices[e[1]])))
            .sum::<f64>()
            / edges.len() as f64
    }

    /// Removes vertices not referenced by any face, returning the old→new map.
    pub fn compact(&mut self) -> Vec<Option<usize>> {
        let mut map = vec![None; self.vertices.len()];
        let mut verts = Vec::new();
        for f in &mut self.faces {
            for v in f.iter_mut() {
                let new = *map[*v].get_or_insert_with(|| {
                    verts.push(self.vertices[*v]);
                    verts.len() - 1
                });
                *v = new;
            }
        }
        self.vertices = verts;
        map
    }

    pub fn transformed(&self, frame: &Frame) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|&p| frame.apply(p)).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn inverse_transformed(&self, frame: &Frame) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|&p| frame.invert(p)).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn triangles(&self) -> Vec<[Vec3; 3]> {
        (0..self.faces.len()).map(|f| self.face_points(f)).collect()
    }

    /// Number of pairs of non-adjacent faces whose triangles intersect.
    /// Faces sharing a vertex are skipped.
    pub fn count_self_intersections(&self) -> usize {
        let tris = self.triangles();
        let boxes: Vec<(Vec3, Vec3)> = tris
            .iter()
            .map(|t| {
                let mut lo = t[0];
                let mut hi = t[0];
                for p in &t[1..] {
                    for k in 0..3 {
                        lo[k] = lo[k].min(p[k]);
                        hi[k] = hi[k].max(p[k]);
                    }
                }
                (lo, hi)
            })
            .collect();
        // sweep along x
        let mut order: Vec<usize> = (0..tris.len()).collect();
        order.sort_by(|&a, &b| boxes[a].0[0].total_cmp(&boxes[b].0[0]).then(a.cmp(&b)));
        let mut count = 0;
        for (i, &a) in order.iter().enumerate() {
            for &b in &order[i + 1..] {
                if boxes[b].0[0] > boxes[a].1[0] {
                    break;
                }
                let overlap = (1..3).all(|k| boxes[a].0[k] <= boxes[b].1[k] && boxes[b].0[k] <= boxes[a].1[k]);
                if !overlap {
                    continue;
                }
                let fa = self.faces[a];
                let fb = self.faces[b];
                if fa.iter().any(|v| fb.contains(v)) {
                    continue;
                }
                if tri_tri_intersect(&tris[a], &tris[b]) {
                    count += 1;
                }
            }
        }
        count
    }
}

fn segment_hits_triangle(p: Vec3, q: Vec3, t: &[Vec3; 3]) -> bool {
    let n = geom::tri_normal(t[0], t[1], t[2]);
    let dp = geom::dot(n, geom::sub(p, t[0]));
    let dq = geom::dot(n, geom::sub(q, t[0]));
    if (dp > 0.0 && dq > 0.0) || (dp < 0.0 && dq < 0.0) || dp == dq {
        return false;
    }
    let s = dp / (dp - dq);
    let x = geom::add(p, geom::scale(geom::sub(q, p), s));
    let c0 = geom::dot(n, geom::cross(geom::sub(t[1], t[0]), geom::sub(x, t[0])));
    let c1 = geom::dot(n, geom::cross(geom::sub(t[2], t[1]), geom::sub(x, t[1])));
    let c2 = geom::dot(n, geom::cross(geom::sub(t[0], t[2]), geom::sub(x, t[2])));
    (c0 >= 0.0 && c1 >= 0.0 && c2 >= 0.0) || (c0 <= 0.0 && c1 <= 0.0 && c2 <= 0.0)
}

/// Triangle/triangle intersection via edge/triangle segment tests
/// (coplanar overlaps are not reported).
pub fn tri_tri_intersect(a: &[Vec3; 3], b: &[Vec3; 3]) -> bool {
    (0..3).any(|k| segment_hits_triangle(a[k], a[(k + 1) % 3], b))
        || (0..3).any(|k| segment_hits_triangle(b[k], b[(k + 1) % 3], a))
}

/// A point on the surface of a mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub face_id: usize,
    pub barycentric: [f64; 3],
    pub position: Vec3,
}

impl SurfacePoint {
    pub fn on_face(mesh: &TriangleMesh, face_id: usize, barycentric: [f64; 3]) -> Self {
        let [a, b, c] = mesh.face_points(face_id);
        SurfacePoint {
            face_id,
            barycentric,
            position: geom::lerp3(a, b, c, barycentric),
        }
    }
}
