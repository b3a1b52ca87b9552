use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{SurfacePoint, TriangleMesh};
use crate::geom::Vec3;

/// Area-weighted uniform samples on the mesh surface, reproducible per seed.
pub fn sample_surface(mesh: &TriangleMesh, k: usize, seed: u64) -> Vec<SurfacePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_surface_rng(mesh, k, &mut rng)
}

pub(crate) fn sample_surface_rng(mesh: &TriangleMesh, k: usize, rng: &mut impl Rng) -> Vec<SurfacePoint> {
    let mut cdf = Vec::with_capacity(mesh.faces.len());
    let mut acc = 0.0;
    for f in 0..mesh.faces.len() {
        acc += mesh.face_area(f);
        cdf.push(acc);
    }
    if mesh.faces.is_empty() {
        return Vec::new();
    }
    let total = acc;
    (0..k)
        .map(|_| {
            let r = rng.random::<f64>() * total;
            let f = if total > 0.0 {
                cdf.partition_point(|&c| c <= r).min(cdf.len() - 1)
            } else {
                rng.random_range(0..mesh.faces.len())
            };
            let s: f64 = rng.random::<f64>().sqrt();
            let t: f64 = rng.random();
            let w = [1.0 - s, s * (1.0 - t), s * t];
            SurfacePoint::on_face(mesh, f, w)
        })
        .collect()
}

/// Surface samples together with the unit normal of the face they lie on.
pub fn sample_surface_with_normals(mesh: &TriangleMesh, k: usize, seed: u64) -> (Vec<Vec3>, Vec<Vec3>) {
    let samples = sample_surface(mesh, k, seed);
    let normals: Vec<Vec3> = (0..mesh.faces.len()).map(|f| mesh.face_normal(f)).collect();
    samples
        .iter()
        .map(|s| (s.position, normals[s.face_id]))
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_faces(ratio: f64) -> TriangleMesh {
        // face 0 has area 0.5, face 1 has area 0.5 / ratio
        TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0 / ratio, 0.0, 0.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    fn counts(m: &TriangleMesh, k: usize, seed: u64) -> [usize; 2] {
        let mut c = [0; 2];
        for s in sample_surface(m, k, seed) {
            c[s.face_id] += 1;
        }
        c
    }

    #[test]
    fn equal_faces_split_evenly() {
        // binomial(10000, 0.5): sigma = 50, 3 sigma = 150 <= 200
        let c = counts(&two_faces(1.0), 10_000, 7);
        assert!((c[0] as i64 - 5000).abs() <= 200, "{c:?}");
    }

    #[test]
    fn nine_to_one_split() {
        // binomial(10000, 0.9): sigma = 30, 5 sigma = 150
        let c = counts(&two_faces(9.0), 10_000, 8);
        assert!((c[0] as i64 - 9000).abs() <= 150, "{c:?}");
        assert_eq!(c[0] + c[1], 10_000);
    }

    #[test]
    fn single_sample_is_valid() {
        let m = two_faces(1.0);
        let s = sample_surface(&m, 1, 0);
        assert_eq!(s.len(), 1);
        let w = s[0].barycentric;
        assert!(w.iter().all(|&x| x >= 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn deterministic_per_seed() {
        let m = two_faces(3.0);
        assert_eq!(sample_surface(&m, 50, 1), sample_surface(&m, 50, 1));
        assert_ne!(sample_surface(&m, 50, 1), sample_surface(&m, 50, 2));
    }
}
