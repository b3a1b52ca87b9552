use std::collections::HashMap;

use super::TriangleMesh;
use crate::error::{Error, Result};

/// Marker for a missing face or neighbour (boundary).
pub const INVALID: usize = usize::MAX;

/// Edge graph of a triangle mesh.
///
/// For edge `e = (v0, v1)` with first incident face `f0` (which traverses
/// `v0 -> v1`, or the reverse when only that orientation exists) the
/// neighbours are `[a, b, c, d]`: `a`, `b` are the edges following `e`
/// around `f0` and `c`, `d` the edges following `e` around `f1`. Missing
/// entries on the boundary are [`INVALID`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTopology {
    pub edges: Vec<[usize; 2]>,
    pub edge_faces: Vec<[usize; 2]>,
    pub neighbors: Vec<[usize; 4]>,
    pub face_edges: Vec<[usize; 3]>,
    pub one_ring: Vec<Vec<usize>>,
}

impl EdgeTopology {
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_boundary(&self, e: usize) -> bool {
        self.edge_faces[e][1] == INVALID
    }

    /// Neighbour table with missing entries replaced by the edge itself.
    pub fn filled_neighbors(&self) -> Vec<[usize; 4]> {
        self.neighbors
            .iter()
            .enumerate()
            .map(|(e, n)| n.map(|x| if x == INVALID { e } else { x }))
            .collect()
    }

    /// `(edge, side)` pairs incident to each vertex; side 0 is `edges[e][0]`.
    pub fn vertex_edges(&self, num_vertices: usize) -> Vec<Vec<(usize, usize)>> {
        let mut out = vec![Vec::new(); num_vertices];
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            out[a].push((e, 0));
            out[b].push((e, 1));
        }
        out
    }
}

/// Builds the edge graph. Fails on edges with more than two incident faces.
pub fn build_edge_topology(mesh: &TriangleMesh) -> Result<EdgeTopology> {
    let nf = mesh.faces.len();
    let mut index: HashMap<(usize, usize), usize> = HashMap::with_capacity(nf * 2);
    let mut edges = Vec::with_capacity(nf * 3 / 2 + 2);
    let mut edge_faces: Vec<[usize; 2]> = Vec::with_capacity(nf * 3 / 2 + 2);
    let mut face_edges = vec![[INVALID; 3]; nf];

    for (fi, f) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let e = *index.entry(key).or_insert_with(|| {
                edges.push([a, b]);
                edge_faces.push([INVALID, INVALID]);
                edges.len() - 1
            });
            let slot = &mut edge_faces[e];
            if slot[0] == INVALID {
                slot[0] = fi;
            } else if slot[1] == INVALID {
                slot[1] = fi;
            } else {
                return Err(Error::Topology(format!(
                    "non-manifold edge ({}, {}) has more than two incident faces",
                    key.0, key.1
                )));
            }
            face_edges[fi][k] = e;
        }
    }

    let neighbors = edge_faces
        .iter()
        .enumerate()
        .map(|(e, faces)| {
            let mut n = [INVALID; 4];
            for (side, &f) in faces.iter().enumerate() {
                if f == INVALID {
                    continue;
                }
                let k = face_edges[f].iter().position(|&x| x == e).unwrap();
                n[2 * side] = face_edges[f][(k + 1) % 3];
                n[2 * side + 1] = face_edges[f][(k + 2) % 3];
            }
            n
        })
        .collect();

    let mut one_ring = vec![Vec::new(); mesh.vertices.len()];
    for &[a, b] in &edges {
        one_ring[a].push(b);
        one_ring[b].push(a);
    }
    for r in &mut one_ring {
        r.sort_unstable();
    }

    Ok(EdgeTopology {
        edges,
        edge_faces,
        neighbors,
        face_edges,
        one_ring,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::fixtures::*;

    #[test]
    fn tetrahedron_edges() {
        let t = build_edge_topology(&tetrahedron()).unwrap();
        assert_eq!(t.num_edges(), 6);
        assert!(t.neighbors.iter().all(|n| n.iter().all(|&x| x != INVALID)));
    }

    #[test]
    fn icosahedron_edges() {
        let m = icosahedron();
        let t = build_edge_topology(&m).unwrap();
        assert_eq!(t.num_edges(), 30);
        assert_eq!(t.num_edges(), 3 * m.num_faces() / 2);
        assert!(t.one_ring.iter().all(|r| r.len() == 5));
    }

    #[test]
    fn single_triangle_is_boundary() {
        let m = TriangleMesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap();
        let t = build_edge_topology(&m).unwrap();
        assert_eq!(t.num_edges(), 3);
        for e in 0..3 {
            assert!(t.is_boundary(e));
            assert_eq!(t.neighbors[e].iter().filter(|&&x| x != INVALID).count(), 2);
        }
    }

    #[test]
    fn neighbor_relation_is_consistent() {
        let m = icosphere(1);
        let t = build_edge_topology(&m).unwrap();
        for e in 0..t.num_edges() {
            for side in 0..2 {
                let f = t.edge_faces[e][side];
                for &nb in &t.neighbors[e][2 * side..2 * side + 2] {
                    assert!(t.face_edges[f].contains(&nb));
                    assert!(t.face_edges[f].contains(&e));
                }
            }
        }
    }

    #[test]
    fn non_manifold_edge_rejected() {
        let m = TriangleMesh::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]],
            vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]],
        )
        .unwrap();
        assert!(matches!(build_edge_topology(&m), Err(Error::Topology(_))));
    }
}
