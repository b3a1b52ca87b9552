use super::TriangleMesh;
use crate::geom::{self, Vec3};

/// Triangle mesh with incremental edge collapses, shared by decimation and
/// edge pooling. Faces are tombstoned rather than removed.
#[derive(Debug, Clone)]
pub struct CollapseMesh {
    pub positions: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    face_alive: Vec<bool>,
    vertex_faces: Vec<Vec<usize>>,
    vertex_alive: Vec<bool>,
    live_vertices: usize,
    live_faces: usize,
}

impl CollapseMesh {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let mut vertex_faces = vec![Vec::new(); mesh.vertices.len()];
        for (fi, f) in mesh.faces.iter().enumerate() {
            for &v in f {
                vertex_faces[v].push(fi);
            }
        }
        CollapseMesh {
            positions: mesh.vertices.clone(),
            faces: mesh.faces.clone(),
            face_alive: vec![true; mesh.faces.len()],
            vertex_alive: vertex_faces.iter().map(|f| !f.is_empty()).collect(),
            live_vertices: vertex_faces.iter().filter(|f| !f.is_empty()).count(),
            vertex_faces,
            live_faces: mesh.faces.len(),
        }
    }

    pub fn live_vertices(&self) -> usize {
        self.live_vertices
    }

    pub fn live_faces(&self) -> usize {
        self.live_faces
    }

    pub fn is_vertex_alive(&self, v: usize) -> bool {
        self.vertex_alive[v]
    }

    pub fn faces_of(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.vertex_faces[v].iter().copied().filter(|&f| self.face_alive[f])
    }

    pub fn face(&self, f: usize) -> [usize; 3] {
        self.faces[f]
    }

    /// Sorted, deduplicated one-ring of `v`.
    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut n: Vec<usize> = self
            .faces_of(v)
            .flat_map(|f| self.faces[f])
            .filter(|&x| x != v)
            .collect();
        n.sort_unstable();
        n.dedup();
        n
    }

    /// Faces containing both `u` and `v`.
    pub fn edge_faces(&self, u: usize, v: usize) -> Vec<usize> {
        self.faces_of(u).filter(|&f| self.faces[f].contains(&v)).collect()
    }

    /// Vertices opposite edge `(u, v)` in its incident faces.
    pub fn opposite(&self, u: usize, v: usize) -> Vec<usize> {
        self.edge_faces(u, v)
            .into_iter()
            .map(|f| *self.faces[f].iter().find(|&&x| x != u && x != v).unwrap())
            .collect()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.neighbors(v)
            .into_iter()
            .any(|n| self.edge_faces(v, n).len() != 2)
    }

    /// Collapsing `(u, v)` keeps the surface a closed 2-manifold: the edge is
    /// interior, neither endpoint is on the boundary, the link condition
    /// holds and at least four vertices remain.
    pub fn can_collapse(&self, u: usize, v: usize) -> bool {
        if u == v || !self.vertex_alive[u] || !self.vertex_alive[v] || self.live_vertices <= 4 {
            return false;
        }
        let opp = self.opposite(u, v);
        if opp.len() != 2 || opp[0] == opp[1] {
            return false;
        }
        if self.is_boundary_vertex(u) || self.is_boundary_vertex(v) {
            return false;
        }
        let nu = self.neighbors(u);
        let nv = self.neighbors(v);
        let common = nu.iter().filter(|x| nv.binary_search(x).is_ok()).count();
        if common != 2 {
            return false;
        }
        // opposite vertices must keep valence >= 3
        opp.iter().all(|&w| self.neighbors(w).len() > 3)
    }

    /// Whether moving `u` and `v` to `target` flips or nearly degenerates any
    /// surviving face around them.
    pub fn collapse_flips(&self, u: usize, v: usize, target: Vec3) -> bool {
        for &x in &[u, v] {
            for f in self.faces_of(x) {
                let tri = self.faces[f];
                if tri.contains(&u) && tri.contains(&v) {
                    continue;
                }
                let p = tri.map(|w| self.positions[w]);
                let before = geom::tri_normal(p[0], p[1], p[2]);
                let q = tri.map(|w| if w == u || w == v { target } else { self.positions[w] });
                let after = geom::tri_normal(q[0], q[1], q[2]);
                let nb = geom::norm(before);
                let na = geom::norm(after);
                if na <= 1e-14 * nb.max(1e-300) || geom::dot(before, after) <= 0.2 * nb * na {
                    return true;
                }
            }
        }
        false
    }

    /// Merges `v` into `u` and moves `u` to `target`. Returns the faces that
    /// were removed. The caller must have checked [`Self::can_collapse`].
    pub fn collapse(&mut self, u: usize, v: usize, target: Vec3) -> Vec<usize> {
        let mut removed = Vec::new();
        let vf: Vec<usize> = self.faces_of(v).collect();
        for f in vf {
            if self.faces[f].contains(&u) {
                self.face_alive[f] = false;
                self.live_faces -= 1;
                removed.push(f);
            } else {
                for x in self.faces[f].iter_mut() {
                    if *x == v {
                        *x = u;
                    }
                }
                self.vertex_faces[u].push(f);
            }
        }
        self.vertex_faces[v].clear();
        self.vertex_alive[v] = false;
        self.live_vertices -= 1;
        let alive = &self.face_alive;
        self.vertex_faces[u].retain(|&f| alive[f]);
        for &f in &removed {
            for &w in &self.faces[f] {
                if w != u && w != v {
                    self.vertex_faces[w].retain(|&g| g != f);
                }
            }
        }
        self.positions[u] = target;
        removed
    }

    /// Compacts into a mesh; also returns the old→new vertex map.
    pub fn to_mesh(&self) -> (TriangleMesh, Vec<Option<usize>>) {
        let faces: Vec<[usize; 3]> = self
            .faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, &a)| a)
            .map(|(f, _)| *f)
            .collect();
        let mut mesh = TriangleMesh::from_raw(self.positions.clone(), faces);
        let map = mesh.compact();
        (mesh, map)
    }
}
