use std::collections::VecDeque;

use super::{TriangleMesh, INVALID};
use crate::error::{Error, Result};
use crate::geom::{self, Vec3};

/// Number of face rings each region is grown by to form overlaps.
pub const OVERLAP_RINGS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct MeshPart {
    pub mesh: TriangleMesh,
    /// Parent vertex index of each part vertex.
    pub vertex_map: Vec<usize>,
    /// Parent face index of each part face.
    pub face_map: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshPartition {
    pub parts: Vec<MeshPart>,
    /// Number of parts containing each parent vertex.
    pub overlap_counts: Vec<usize>,
    pub num_parent_faces: usize,
}

/// Splits a mesh into overlapping parts of at most `max_faces` faces.
///
/// Regions are grown breadth-first from farthest-point seeds, then each is
/// dilated by [`OVERLAP_RINGS`] vertex-adjacent face rings.
pub fn partition_mesh(mesh: &TriangleMesh, max_faces: usize) -> Result<MeshPartition> {
    if max_faces < 100 {
        return Err(Error::Parameter(format!("max_faces must be >= 100, got {max_faces}")));
    }
    let nf = mesh.num_faces();
    if nf <= max_faces {
        let part = MeshPart {
            mesh: mesh.clone(),
            vertex_map: (0..mesh.num_vertices()).collect(),
            face_map: (0..nf).collect(),
        };
        return Ok(MeshPartition {
            parts: vec![part],
            overlap_counts: vec![1; mesh.num_vertices()],
            num_parent_faces: nf,
        });
    }

    let adjacency = face_adjacency(mesh);
    let vertex_faces = vertex_faces(mesh);
    let centroids: Vec<Vec3> = (0..nf)
        .map(|f| {
            let [a, b, c] = mesh.face_points(f);
            geom::scale(geom::add(geom::add(a, b), c), 1.0 / 3.0)
        })
        .collect();

    let mut k = nf.div_ceil(max_faces / 2).max(2);
    loop {
        let regions = grow_regions(&adjacency, &centroids, k);
        let dilated: Vec<Vec<usize>> = regions
            .iter()
            .map(|r| dilate(mesh, &vertex_faces, r, OVERLAP_RINGS))
            .collect();
        if dilated.iter().all(|d| d.len() <= max_faces) {
            return Ok(build_partition(mesh, dilated));
        }
        if k >= nf {
            return Err(Error::Parameter("could not partition mesh under max_faces".into()));
        }
        k += (k / 4).max(1);
    }
}

fn face_adjacency(mesh: &TriangleMesh) -> Vec<[usize; 3]> {
    let topo = super::build_edge_topology(mesh);
    let mut adj = vec![[INVALID; 3]; mesh.num_faces()];
    if let Ok(t) = topo {
        for (f, edges) in t.face_edges.iter().enumerate() {
            for k in 0..3 {
                let [f0, f1] = t.edge_faces[edges[k]];
                adj[f][k] = if f0 == f { f1 } else { f0 };
            }
        }
    }
    adj
}

fn vertex_faces(mesh: &TriangleMesh) -> Vec<Vec<usize>> {
    let mut vf = vec![Vec::new(); mesh.num_vertices()];
    for (f, tri) in mesh.faces.iter().enumerate() {
        for &v in tri {
            vf[v].push(f);
        }
    }
    vf
}

// Farthest-point seeds, then synchronous breadth-first growth.
fn grow_regions(adjacency: &[[usize; 3]], centroids: &[Vec3], k: usize) -> Vec<Vec<usize>> {
    let nf = centroids.len();
    let mut seeds = vec![0usize];
    let mut dist: Vec<f64> = centroids.iter().map(|c| geom::dist2(*c, centroids[0])).collect();
    while seeds.len() < k.min(nf) {
        let next = (0..nf)
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
            .unwrap();
        seeds.push(next);
        for f in 0..nf {
            dist[f] = dist[f].min(geom::dist2(centroids[f], centroids[next]));
        }
    }

    let mut owner = vec![usize::MAX; nf];
    let mut queues: Vec<VecDeque<usize>> = Vec::new();
    for (r, &s) in seeds.iter().enumerate() {
        owner[s] = r;
        queues.push(VecDeque::from([s]));
    }
    loop {
        while queues.iter().any(|q| !q.is_empty()) {
            for (r, queue) in queues.iter_mut().enumerate() {
                // one breadth layer per region per round
                for _ in 0..queue.len() {
                    let f = queue.pop_front().unwrap();
                    for &n in &adjacency[f] {
                        if n != INVALID && owner[n] == usize::MAX {
                            owner[n] = r;
                            queue.push_back(n);
                        }
                    }
                }
            }
        }
        // unreached faces belong to another connected component
        match owner.iter().position(|&o| o == usize::MAX) {
            Some(f) => {
                owner[f] = queues.len();
                queues.push(VecDeque::from([f]));
            }
            None => break,
        }
    }
    let mut regions = vec![Vec::new(); queues.len()];
    for (f, &o) in owner.iter().enumerate() {
        regions[o].push(f);
    }
    regions.retain(|r| !r.is_empty());
    regions
}

fn dilate(mesh: &TriangleMesh, vertex_faces: &[Vec<usize>], region: &[usize], rings: usize) -> Vec<usize> {
    let mut inside = vec![false; mesh.num_faces()];
    for &f in region {
        inside[f] = true;
    }
    let mut frontier: Vec<usize> = region.to_vec();
    for _ in 0..rings {
        let mut next = Vec::new();
        for &f in &frontier {
            for &v in &mesh.faces[f] {
                for &g in &vertex_faces[v] {
                    if !inside[g] {
                        inside[g] = true;
                        next.push(g);
                    }
                }
            }
        }
        frontier = next;
    }
    (0..mesh.num_faces()).filter(|&f| inside[f]).collect()
}

fn build_partition(mesh: &TriangleMesh, face_sets: Vec<Vec<usize>>) -> MeshPartition {
    let mut overlap_counts = vec![0usize; mesh.num_vertices()];
    let parts = face_sets
        .into_iter()
        .map(|face_map| {
            let mut local = vec![usize::MAX; mesh.num_vertices()];
            let mut vertex_map = Vec::new();
            let faces = face_map
                .iter()
                .map(|&f| {
                    mesh.faces[f].map(|v| {
                        if local[v] == usize::MAX {
                            local[v] = vertex_map.len();
                            vertex_map.push(v);
                        }
                        local[v]
                    })
                })
                .collect();
            for &v in &vertex_map {
                overlap_counts[v] += 1;
            }
            let vertices = vertex_map.iter().map(|&v| mesh.vertices[v]).collect();
            MeshPart {
                mesh: TriangleMesh::from_raw(vertices, faces),
                vertex_map,
                face_map,
            }
        })
        .collect();
    MeshPartition {
        parts,
        overlap_counts,
        num_parent_faces: mesh.num_faces(),
    }
}

/// Averages per-part vertex positions back onto the parent mesh.
pub fn merge_partitions(partition: &MeshPartition, per_part_vertices: &[Vec<Vec3>]) -> Result<Vec<Vec3>> {
    if per_part_vertices.len() != partition.parts.len() {
        return Err(Error::Parameter(format!(
            "{} vertex arrays for {} parts",
            per_part_vertices.len(),
            partition.parts.len()
        )));
    }
    // offsets from the first copy, so identical copies merge bit-exactly
    let nv = partition.overlap_counts.len();
    let mut anchor = vec![[0.0; 3]; nv];
    let mut offset = vec![[0.0; 3]; nv];
    let mut count = vec![0usize; nv];
    for (i, (part, verts)) in partition.parts.iter().zip(per_part_vertices).enumerate() {
        if verts.len() != part.vertex_map.len() {
            return Err(Error::Parameter(format!(
                "part {i}: {} vertices, expected {}",
                verts.len(),
                part.vertex_map.len()
            )));
        }
        for (&parent, &p) in part.vertex_map.iter().zip(verts) {
            if count[parent] == 0 {
                anchor[parent] = p;
            } else {
                offset[parent] = geom::add(offset[parent], geom::sub(p, anchor[parent]));
            }
            count[parent] += 1;
        }
    }
    if let Some(v) = count.iter().position(|&c| c == 0) {
        return Err(Error::Coverage(format!("parent vertex {v} is not covered by any part")));
    }
    Ok(anchor
        .into_iter()
        .zip(offset)
        .zip(count)
        .map(|((a, o), c)| geom::add(a, geom::scale(o, 1.0 / c as f64)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::fixtures::*;
    use crate::mesh::midpoint_subdivide;

    #[test]
    fn small_mesh_single_part() {
        let m = icosphere(4); // 5120 faces
        let p = partition_mesh(&m, 6000).unwrap();
        assert_eq!(p.parts.len(), 1);
        assert_eq!(p.parts[0].mesh, m);
        assert_eq!(p.parts[0].vertex_map, (0..m.num_vertices()).collect::<Vec<_>>());
    }

    #[test]
    fn large_sphere_split_and_covered() {
        let m = midpoint_subdivide(&icosphere(4)); // 20480 faces
        let p = partition_mesh(&m, 6000).unwrap();
        assert!(p.parts.len() >= 4, "{} parts", p.parts.len());
        let mut covered = vec![false; m.num_faces()];
        for part in &p.parts {
            assert!(part.mesh.num_faces() <= 6000);
            for &f in &part.face_map {
                covered[f] = true;
            }
        }
        assert!(covered.iter().all(|&c| c));
        assert!(p.overlap_counts.iter().all(|&c| c >= 1));
        assert!(p.overlap_counts.iter().any(|&c| c >= 2));

        let verts: Vec<Vec<Vec3>> = p
            .parts
            .iter()
            .map(|part| part.mesh.vertices.clone())
            .collect();
        let merged = merge_partitions(&p, &verts).unwrap();
        for (a, b) in merged.iter().zip(&m.vertices) {
            assert!(geom::dist2(*a, *b) < 1e-28);
        }
    }

    #[test]
    fn overlap_band_vertices_counted_twice() {
        let m = midpoint_subdivide(&icosphere(3)); // 5120 faces
        let p = partition_mesh(&m, 1500).unwrap();
        // every vertex on a region boundary lies strictly inside the
        // neighbouring dilated part as well
        let mut membership = vec![0usize; m.num_vertices()];
        for part in &p.parts {
            for &v in &part.vertex_map {
                membership[v] += 1;
            }
        }
        assert_eq!(membership, p.overlap_counts);
        let shared = p.overlap_counts.iter().filter(|&&c| c >= 2).count();
        assert!(shared > m.num_vertices() / 10);
    }

    #[test]
    fn merge_mean_and_errors() {
        let m = icosahedron();
        let partition = MeshPartition {
            parts: vec![
                MeshPart {
                    mesh: m.clone(),
                    vertex_map: (0..12).collect(),
                    face_map: (0..20).collect(),
                },
                MeshPart {
                    mesh: m.clone(),
                    vertex_map: vec![0],
                    face_map: vec![],
                },
            ],
            overlap_counts: vec![1; 12],
            num_parent_faces: 20,
        };
        let mut a = vec![[0.0; 3]; 12];
        a[0] = [0.0, 0.0, 0.0];
        let b = vec![[2.0, 2.0, 2.0]];
        let merged = merge_partitions(&partition, &[a.clone(), b]).unwrap();
        assert_eq!(merged[0], [1.0, 1.0, 1.0]);
        assert!(matches!(merge_partitions(&partition, &[a.clone()]), Err(Error::Parameter(_))));
        let mut uncovered = partition.clone();
        uncovered.parts[0].vertex_map[5] = 0;
        assert!(matches!(
            merge_partitions(&uncovered, &[a, vec![[0.0; 3]]]),
            Err(Error::Coverage(_))
        ));
        assert!(matches!(partition_mesh(&m, 50), Err(Error::Parameter(_))));
    }
}
