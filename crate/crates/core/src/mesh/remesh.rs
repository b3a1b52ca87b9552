//! Watertight resolution changes: midpoint subdivision and longest-edge
//! bisection to refine, quadric-error edge collapse to coarsen.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use super::{CollapseMesh, TriangleMesh};
use crate::error::{Error, Result};
use crate::geom::{self, Vec3};

/// Produces a watertight mesh close to the input surface with a requested
/// number of vertices. Implementations may wrap external tools.
pub trait Remesher {
    fn remesh(&self, mesh: &TriangleMesh, target_vertices: usize) -> Result<TriangleMesh>;
}

/// Subdivision and bisection for refinement, QEM for coarsening.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinRemesher;

impl Remesher for BuiltinRemesher {
    fn remesh(&self, mesh: &TriangleMesh, target_vertices: usize) -> Result<TriangleMesh> {
        remesh_to_resolution(mesh, target_vertices)
    }
}

/// Changes the vertex count of a watertight mesh to `target_vertices`.
///
/// Refinement applies whole midpoint subdivisions while they do not
/// overshoot the target by more than 10%, then bisects the longest edges
/// one at a time; coarsening runs quadric-error decimation.
pub fn remesh_to_resolution(mesh: &TriangleMesh, target_vertices: usize) -> Result<TriangleMesh> {
    if target_vertices < 4 {
        return Err(Error::Parameter(format!("target_vertices must be >= 4, got {target_vertices}")));
    }
    if !mesh.is_watertight() {
        return Err(Error::Topology("remeshing requires a watertight mesh".into()));
    }
    let nv = mesh.num_vertices();
    if nv == target_vertices {
        return Ok(mesh.clone());
    }
    if nv > target_vertices {
        return Ok(decimate_qem(mesh, target_vertices));
    }
    let mut out = mesh.clone();
    let limit = target_vertices + target_vertices / 10;
    loop {
        let ne = out.faces.len() * 3 / 2;
        if out.num_vertices() + ne > limit {
            break;
        }
        out = midpoint_subdivide(&out);
    }
    if out.num_vertices() < target_vertices {
        let n = target_vertices - out.num_vertices();
        out = longest_edge_split(&out, n);
    } else if out.num_vertices() > target_vertices {
        out = decimate_qem(&out, target_vertices);
    }
    Ok(out)
}

/// One round of 1-to-4 midpoint subdivision (geometry unchanged).
pub fn midpoint_subdivide(mesh: &TriangleMesh) -> TriangleMesh {
    let mut vertices = mesh.vertices.clone();
    let mut mid: HashMap<(usize, usize), usize> = HashMap::with_capacity(mesh.faces.len() * 2);
    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec3>| {
        *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
            vertices.push(geom::scale(geom::add(vertices[a], vertices[b]), 0.5));
            vertices.len() - 1
        })
    };
    let mut faces = Vec::with_capacity(mesh.faces.len() * 4);
    for &[a, b, c] in &mesh.faces {
        let ab = midpoint(a, b, &mut vertices);
        let bc = midpoint(b, c, &mut vertices);
        let ca = midpoint(c, a, &mut vertices);
        faces.push([a, ab, ca]);
        faces.push([ab, b, bc]);
        faces.push([ca, bc, c]);
        faces.push([ab, bc, ca]);
    }
    TriangleMesh::from_raw(vertices, faces)
}

/// Splits the currently longest edge at its midpoint `count` times.
/// Ties are broken toward the lexicographically smallest vertex pair.
pub fn longest_edge_split(mesh: &TriangleMesh, count: usize) -> TriangleMesh {
    let mut vertices = mesh.vertices.clone();
    let mut faces = mesh.faces.clone();
    let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::with_capacity(faces.len() * 2);
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            edge_faces.entry(key(f[k], f[(k + 1) % 3])).or_default().push(fi);
        }
    }
    let len_key = |v: &[Vec3], e: (usize, usize)| geom::dist2(v[e.0], v[e.1]).to_bits();
    let mut heap: BinaryHeap<(u64, Reverse<(usize, usize)>)> = edge_faces
        .keys()
        .map(|&e| (len_key(&vertices, e), Reverse(e)))
        .collect();

    let mut done = 0;
    while done < count {
        let Some((_, Reverse(e))) = heap.pop() else { break };
        let Some(incident) = edge_faces.remove(&e) else { continue };
        let m = vertices.len();
        vertices.push(geom::scale(geom::add(vertices[e.0], vertices[e.1]), 0.5));
        for f in incident {
            let tri = faces[f];
            let k = (0..3)
                .find(|&k| key(tri[k], tri[(k + 1) % 3]) == e)
                .expect("edge/face map out of sync");
            let (a, b, c) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
            // f becomes (a, m, c), new face (m, b, c)
            faces[f] = [a, m, c];
            let g = faces.len();
            faces.push([m, b, c]);
            // edge (b, c) now belongs to g instead of f
            let bc = edge_faces.get_mut(&key(b, c)).unwrap();
            for x in bc.iter_mut() {
                if *x == f {
                    *x = g;
                }
            }
            edge_faces.entry(key(a, m)).or_default().push(f);
            edge_faces.entry(key(m, b)).or_default().push(g);
            edge_faces.entry(key(m, c)).or_insert_with(Vec::new).extend([f, g]);
            heap.push((len_key(&vertices, key(m, c)), Reverse(key(m, c))));
        }
        for ek in [key(e.0, m), key(m, e.1)] {
            heap.push((len_key(&vertices, ek), Reverse(ek)));
        }
        done += 1;
    }
    TriangleMesh::from_raw(vertices, faces)
}

#[derive(Debug, Clone, Copy, Default)]
struct Quadric([f64; 10]);

impl Quadric {
    fn plane(n: Vec3, d: f64, w: f64) -> Self {
        let [a, b, c] = n;
        Quadric([
            w * a * a,
            w * a * b,
            w * a * c,
            w * a * d,
            w * b * b,
            w * b * c,
            w * b * d,
            w * c * c,
            w * c * d,
            w * d * d,
        ])
    }

    fn add(&self, o: &Quadric) -> Quadric {
        let mut r = *self;
        for i in 0..10 {
            r.0[i] += o.0[i];
        }
        r
    }

    fn eval(&self, p: Vec3) -> f64 {
        let q = &self.0;
        let [x, y, z] = p;
        q[0] * x * x + 2.0 * q[1] * x * y + 2.0 * q[2] * x * z + 2.0 * q[3] * x + q[4] * y * y
            + 2.0 * q[5] * y * z
            + 2.0 * q[6] * y
            + q[7] * z * z
            + 2.0 * q[8] * z
            + q[9]
    }

    // Minimizer of the quadric, if the 3x3 block is well conditioned.
    fn optimum(&self) -> Option<Vec3> {
        let q = &self.0;
        let a = [[q[0], q[1], q[2]], [q[1], q[4], q[5]], [q[2], q[5], q[7]]];
        let b = [-q[3], -q[6], -q[8]];
        let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
        let scale = q[0] + q[4] + q[7];
        if scale <= 0.0 || det.abs() < 1e-9 * scale * scale * scale {
            return None;
        }
        let solve_col = |k: usize| {
            let mut m = a;
            for r in 0..3 {
                m[r][k] = b[r];
            }
            (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))
                / det
        };
        Some([solve_col(0), solve_col(1), solve_col(2)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    cost: f64,
    u: usize,
    v: usize,
    target: Vec3,
    stamp: (u64, u64),
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // min-heap on cost, then on vertex pair
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| (other.u, other.v).cmp(&(self.u, self.v)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Quadric-error edge-collapse decimation down to `target_vertices`
/// (or as far as manifold-preserving collapses allow).
pub fn decimate_qem(mesh: &TriangleMesh, target_vertices: usize) -> TriangleMesh {
    let mut cm = CollapseMesh::new(mesh);
    let mut quadrics = vec![Quadric::default(); mesh.num_vertices()];
    let scale2 = mesh.mean_edge_length().powi(2).max(1e-300);
    for f in &mesh.faces {
        let p = f.map(|v| mesh.vertices[v]);
        let n2 = geom::tri_normal(p[0], p[1], p[2]);
        let area = 0.5 * geom::norm(n2);
        if area <= 0.0 {
            continue;
        }
        let n = geom::scale(n2, 0.5 / area);
        let q = Quadric::plane(n, -geom::dot(n, p[0]), area);
        for &v in f {
            quadrics[v] = quadrics[v].add(&q);
        }
    }
    let mut stamps = vec![0u64; mesh.num_vertices()];

    // A small length penalty keeps zero-error flat regions from collapsing
    // into slivers.
    let candidate = |cm: &CollapseMesh, quadrics: &[Quadric], stamps: &[u64], u: usize, v: usize| {
        let (u, v) = (u.min(v), u.max(v));
        let q = quadrics[u].add(&quadrics[v]);
        let pu = cm.positions[u];
        let pv = cm.positions[v];
        let mid = geom::scale(geom::add(pu, pv), 0.5);
        let mut best = (q.eval(mid), mid);
        for p in [pu, pv].into_iter().chain(q.optimum()) {
            let c = q.eval(p);
            if c < best.0 {
                best = (c, p);
            }
        }
        let penalty = 1e-3 * geom::dist2(pu, pv) / scale2 * q.0[0].max(q.0[4]).max(q.0[7]).max(1e-300);
        Candidate {
            cost: best.0.max(0.0) + penalty,
            u,
            v,
            target: best.1,
            stamp: (stamps[u], stamps[v]),
        }
    };

    let mut heap = BinaryHeap::new();
    for [u, v] in mesh.unique_edges() {
        heap.push(candidate(&cm, &quadrics, &stamps, u, v));
    }
    while cm.live_vertices() > target_vertices {
        let Some(c) = heap.pop() else { break };
        if !cm.is_vertex_alive(c.u) || !cm.is_vertex_alive(c.v) || c.stamp != (stamps[c.u], stamps[c.v]) {
            continue;
        }
        if !cm.can_collapse(c.u, c.v) || cm.collapse_flips(c.u, c.v, c.target) {
            continue;
        }
        cm.collapse(c.u, c.v, c.target);
        quadrics[c.u] = quadrics[c.u].add(&quadrics[c.v]);
        stamps[c.u] += 1;
        for n in cm.neighbors(c.u) {
            stamps[n] += 1;
        }
        let ring = cm.neighbors(c.u);
        for &n in &ring {
            heap.push(candidate(&cm, &quadrics, &stamps, c.u, n));
            for m in cm.neighbors(n) {
                if m != c.u {
                    heap.push(candidate(&cm, &quadrics, &stamps, n, m));
                }
            }
        }
    }
    cm.to_mesh().0
}
