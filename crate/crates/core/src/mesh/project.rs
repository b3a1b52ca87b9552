use super::{SurfacePoint, TriangleMesh};
use crate::geom::Vec3;
use crate::spatial::{closest_on, ClosestHit, TriangleBvh};

/// Reusable closest-point query structure for one mesh.
#[derive(Debug, Clone)]
pub struct MeshProjector {
    bvh: TriangleBvh,
}

impl MeshProjector {
    pub fn new(mesh: &TriangleMesh) -> Self {
        MeshProjector {
            bvh: TriangleBvh::new(mesh.triangles()),
        }
    }

    /// Closest surface point and its squared distance.
    pub fn project(&self, q: Vec3) -> (SurfacePoint, f64) {
        let hit = self.bvh.closest(q).expect("projection onto empty mesh");
        (to_surface_point(hit), hit.dist2)
    }
}

fn to_surface_point(hit: ClosestHit) -> SurfacePoint {
    SurfacePoint {
        face_id: hit.face,
        barycentric: hit.barycentric,
        position: hit.position,
    }
}

/// Exact closest point on the mesh surface to `q`.
///
/// Builds a hierarchy per call; use [`MeshProjector`] for batches.
pub fn project_point_to_mesh(mesh: &TriangleMesh, q: Vec3) -> SurfacePoint {
    MeshProjector::new(mesh).project(q).0
}

/// Exhaustive reference projection over all faces (lowest face id on ties).
pub fn project_point_brute_force(mesh: &TriangleMesh, q: Vec3) -> SurfacePoint {
    let mut best: Option<ClosestHit> = None;
    for f in 0..mesh.faces.len() {
        let hit = closest_on(&mesh.face_points(f), f, q);
        if best.is_none_or(|b| hit.dist2 < b.dist2) {
            best = Some(hit);
        }
    }
    to_surface_point(best.expect("projection onto empty mesh"))
}
