//! Training losses of the 3D prior: the summed squared Chamfer term and the
//! one-ring edge-length regulariser, each with its analytic gradient.

use serde::{Deserialize, Serialize};

use crate::geom::{self, Vec3};
use crate::mesh::{EdgeTopology, SurfacePoint, TriangleMesh};
use crate::spatial::KdTree;

/// Weights of the Chamfer and edge-length terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda0: f64,
    pub lambda1: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda0: 1.0,
            lambda1: 0.2,
        }
    }
}

/// Per-term values of one loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub chamfer: f64,
    pub edge: f64,
    pub total: f64,
}

/// Point set indexed once for repeated Chamfer evaluations.
#[derive(Debug, Clone)]
pub struct ChamferTarget {
    points: Vec<Vec3>,
    tree: KdTree,
}

impl ChamferTarget {
    pub fn new(points: &[Vec3]) -> Self {
        ChamferTarget {
            points: points.to_vec(),
            tree: KdTree::new(points),
        }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Loss and its gradient with respect to each sample.
    pub fn loss_and_grad(&self, samples: &[Vec3]) -> (f64, Vec<Vec3>) {
        let mut grad = vec![[0.0; 3]; samples.len()];
        let mut loss = 0.0;
        for (i, &p) in samples.iter().enumerate() {
            let (j, d2) = self.tree.nearest(p);
            loss += d2;
            grad[i] = geom::add(grad[i], geom::scale(geom::sub(p, self.points[j]), 2.0));
        }
        if samples.is_empty() {
            return (loss, grad);
        }
        let sample_tree = KdTree::new(samples);
        for &q in &self.points {
            let (i, d2) = sample_tree.nearest(q);
            loss += d2;
            grad[i] = geom::add(grad[i], geom::scale(geom::sub(samples[i], q), 2.0));
        }
        (loss, grad)
    }

    pub fn loss(&self, samples: &[Vec3]) -> f64 {
        self.loss_and_grad(samples).0
    }
}

/// `sum_p min_q |p - q|^2 + sum_q min_p |p - q|^2`.
pub fn chamfer_loss(samples_phat: &[Vec3], cloud_q: &[Vec3]) -> f64 {
    ChamferTarget::new(cloud_q).loss(samples_phat)
}

/// Chamfer loss with its gradient with respect to `samples_phat`. Nearest
/// neighbour ties resolve to the lowest index.
pub fn chamfer_loss_grad(samples_phat: &[Vec3], cloud_q: &[Vec3]) -> (f64, Vec<Vec3>) {
    ChamferTarget::new(cloud_q).loss_and_grad(samples_phat)
}

/// `sum_p sum_{k in ring(p)} |p - k|^2`, i.e. twice the summed squared edge
/// lengths.
pub fn edge_length_loss(mesh: &TriangleMesh, topology: &EdgeTopology) -> f64 {
    topology
        .edges
        .iter()
        .map(|&[a, b]| 2.0 * geom::dist2(mesh.vertices[a], mesh.vertices[b]))
        .sum()
}

/// Edge loss with its gradient with respect to each vertex.
pub fn edge_length_loss_grad(mesh: &TriangleMesh, topology: &EdgeTopology) -> (f64, Vec<Vec3>) {
    let mut grad = vec![[0.0; 3]; mesh.num_vertices()];
    let mut loss = 0.0;
    for &[a, b] in &topology.edges {
        let d = geom::sub(mesh.vertices[a], mesh.vertices[b]);
        loss += 2.0 * geom::norm2(d);
        grad[a] = geom::add(grad[a], geom::scale(d, 4.0));
        grad[b] = geom::sub(grad[b], geom::scale(d, 4.0));
    }
    (loss, grad)
}

/// `lambda0 * chamfer + lambda1 * edge`.
pub fn total_geometry_loss(
    samples: &[Vec3],
    cloud: &[Vec3],
    mesh: &TriangleMesh,
    topology: &EdgeTopology,
    weights: LossWeights,
) -> f64 {
    weights.lambda0 * chamfer_loss(samples, cloud) + weights.lambda1 * edge_length_loss(mesh, topology)
}

/// Total loss for surface samples of `mesh` and its gradient with respect
/// to the mesh vertices. Sample gradients flow to vertices through the
/// fixed barycentric weights of each sample.
pub fn geometry_loss_and_grad(
    mesh: &TriangleMesh,
    topology: &EdgeTopology,
    samples: &[SurfacePoint],
    target: &ChamferTarget,
    weights: LossWeights,
) -> (LossBreakdown, Vec<Vec3>) {
    let positions: Vec<Vec3> = samples.iter().map(|s| s.position).collect();
    let (chamfer, sample_grad) = target.loss_and_grad(&positions);
    let (edge, edge_grad) = edge_length_loss_grad(mesh, topology);
    let mut grad: Vec<Vec3> = edge_grad.iter().map(|g| geom::scale(*g, weights.lambda1)).collect();
    for (s, g) in samples.iter().zip(&sample_grad) {
        let face = mesh.faces[s.face_id];
        for k in 0..3 {
            grad[face[k]] = geom::add(grad[face[k]], geom::scale(*g, weights.lambda0 * s.barycentric[k]));
        }
    }
    let breakdown = LossBreakdown {
        chamfer,
        edge,
        total: weights.lambda0 * chamfer + weights.lambda1 * edge,
    };
    (breakdown, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_edge_topology;
    use crate::mesh::fixtures::*;

    #[test]
    fn chamfer_closed_forms() {
        let a = vec![[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]];
        assert_eq!(chamfer_loss(&a, &a), 0.0);
        let d = 0.7;
        assert!((chamfer_loss(&[[0.0; 3]], &[[d, 0.0, 0.0]]) - 2.0 * d * d).abs() < 1e-15);
    }

    #[test]
    fn equilateral_edge_loss() {
        let l = 1.5;
        let m = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [l, 0.0, 0.0], [l / 2.0, l * 3f64.sqrt() / 2.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let t = build_edge_topology(&m).unwrap();
        assert!((edge_length_loss(&m, &t) - 6.0 * l * l).abs() < 1e-12);
    }

    #[test]
    fn weights_select_terms() {
        let m = icosahedron();
        let t = build_edge_topology(&m).unwrap();
        let samples = vec![[0.1, 0.2, 0.3], [-0.4, 0.0, 0.2]];
        let cloud = vec![[0.0, 0.0, 0.5], [0.3, 0.3, 0.3], [0.0, -0.5, 0.0]];
        let c = chamfer_loss(&samples, &cloud);
        let e = edge_length_loss(&m, &t);
        let w = |a, b| LossWeights { lambda0: a, lambda1: b };
        assert_eq!(total_geometry_loss(&samples, &cloud, &m, &t, w(1.0, 0.0)), c);
        assert_eq!(total_geometry_loss(&samples, &cloud, &m, &t, w(0.0, 1.0)), e);
        let combined = total_geometry_loss(&samples, &cloud, &m, &t, LossWeights::default());
        assert!((combined - (c + 0.2 * e)).abs() < 1e-12);
    }

    #[test]
    fn vertex_gradient_matches_finite_differences() {
        let m = icosahedron();
        let t = build_edge_topology(&m).unwrap();
        let samples: Vec<SurfacePoint> = (0..m.num_faces())
            .map(|f| SurfacePoint::on_face(&m, f, [0.2, 0.3, 0.5]))
            .collect();
        let cloud: Vec<Vec3> = (0..40)
            .map(|i| {
                let a = i as f64 * 0.7;
                [a.cos() * 1.1, (a * 1.3).sin() * 0.8, (a * 0.37).cos() * 0.9]
            })
            .collect();
        let target = ChamferTarget::new(&cloud);
        let w = LossWeights::default();
        let eval = |mesh: &TriangleMesh| {
            let s: Vec<SurfacePoint> = samples
                .iter()
                .map(|s| SurfacePoint::on_face(mesh, s.face_id, s.barycentric))
                .collect();
            geometry_loss_and_grad(mesh, &t, &s, &target, w).0.total
        };
        let (_, grad) = geometry_loss_and_grad(&m, &t, &samples, &target, w);
        let h = 1e-5;
        for v in 0..m.num_vertices() {
            for k in 0..3 {
                let mut plus = m.clone();
                plus.vertices[v][k] += h;
                let mut minus = m.clone();
                minus.vertices[v][k] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                assert!((fd - grad[v][k]).abs() <= 1e-4 * fd.abs().max(1.0), "{v},{k}: {fd} vs {}", grad[v][k]);
            }
        }
    }
}
