use std::collections::HashMap;

use super::{longest_extent, PointCloud, TriangleMesh};
use crate::error::{Error, Result};
use crate::geom::{self, Vec3};

// Relative to the longest bounding-box extent.
const REL_EPS: f64 = 1e-10;

struct HullFace {
    v: [usize; 3],
    normal: Vec3,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

impl HullFace {
    fn new(v: [usize; 3], pts: &[Vec3], interior: Vec3) -> Self {
        let mut v = v;
        let mut n = geom::normalize(geom::tri_normal(pts[v[0]], pts[v[1]], pts[v[2]]));
        if geom::dot(n, geom::sub(interior, pts[v[0]])) > 0.0 {
            v.swap(1, 2);
            n = geom::scale(n, -1.0);
        }
        HullFace {
            v,
            normal: n,
            offset: geom::dot(n, pts[v[0]]),
            outside: Vec::new(),
            alive: true,
        }
    }

    #[inline]
    fn dist(&self, p: Vec3) -> f64 {
        geom::dot(self.normal, p) - self.offset
    }
}

/// Convex hull of the cloud as an outward-oriented closed triangle mesh.
///
/// Points within a tiny tolerance of a hull face are treated as lying on
/// it, so coplanar points (cube faces) do not produce extra vertices.
pub fn convex_hull(cloud: &PointCloud) -> Result<TriangleMesh> {
    hull_of_points(&cloud.positions)
}

pub(crate) fn hull_of_points(pts: &[Vec3]) -> Result<TriangleMesh> {
    if pts.len() < 4 {
        return Err(Error::Degenerate(format!("hull needs >= 4 points, got {}", pts.len())));
    }
    let extent = longest_extent(pts);
    if extent <= 0.0 {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let eps = REL_EPS * extent;
    let degenerate_tol = 1e-9 * extent;

    // initial simplex
    let p0 = (0..pts.len())
        .min_by(|&a, &b| pts[a][0].total_cmp(&pts[b][0]).then(a.cmp(&b)))
        .unwrap();
    let p1 = argmax(pts.len(), |i| geom::dist2(pts[i], pts[p0]));
    if geom::dist2(pts[p1], pts[p0]).sqrt() <= degenerate_tol {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let dir = geom::normalize(geom::sub(pts[p1], pts[p0]));
    let line_dist = |i: usize| {
        let d = geom::sub(pts[i], pts[p0]);
        geom::norm2(geom::sub(d, geom::scale(dir, geom::dot(d, dir))))
    };
    let p2 = argmax(pts.len(), line_dist);
    if line_dist(p2).sqrt() <= degenerate_tol {
        return Err(Error::Degenerate("points are collinear".into()));
    }
    let n = geom::normalize(geom::tri_normal(pts[p0], pts[p1], pts[p2]));
    let plane_dist = |i: usize| geom::dot(n, geom::sub(pts[i], pts[p0])).abs();
    let p3 = argmax(pts.len(), plane_dist);
    if plane_dist(p3) <= degenerate_tol {
        return Err(Error::Degenerate("points are coplanar".into()));
    }
    let interior = geom::scale(
        geom::add(geom::add(pts[p0], pts[p1]), geom::add(pts[p2], pts[p3])),
        0.25,
    );

    let mut faces: Vec<HullFace> = Vec::new();
    let mut edge_face: HashMap<(usize, usize), usize> = HashMap::new();
    let add_face = |faces: &mut Vec<HullFace>, edge_face: &mut HashMap<(usize, usize), usize>, v: [usize; 3]| {
        let f = HullFace::new(v, pts, interior);
        let id = faces.len();
        for k in 0..3 {
            edge_face.insert((f.v[k], f.v[(k + 1) % 3]), id);
        }
        faces.push(f);
        id
    };
    for v in [[p0, p1, p2], [p0, p1, p3], [p0, p2, p3], [p1, p2, p3]] {
        add_face(&mut faces, &mut edge_face, v);
    }

    let simplex = [p0, p1, p2, p3];
    for i in 0..pts.len() {
        if simplex.contains(&i) {
            continue;
        }
        if let Some(f) = (0..4).find(|&f| faces[f].dist(pts[i]) > eps) {
            faces[f].outside.push(i);
        }
    }

    let mut pending: Vec<usize> = (0..4).rev().filter(|&f| !faces[f].outside.is_empty()).collect();
    while let Some(fid) = pending.pop() {
        if !faces[fid].alive || faces[fid].outside.is_empty() {
            continue;
        }
        let eye = *faces[fid]
            .outside
            .iter()
            .max_by(|&&a, &&b| {
                faces[fid]
                    .dist(pts[a])
                    .total_cmp(&faces[fid].dist(pts[b]))
                    .then(b.cmp(&a))
            })
            .unwrap();
        let eye_p = pts[eye];

        // visible region by flood fill from fid
        let mut visible = vec![fid];
        let mut is_visible: HashMap<usize, bool> = HashMap::new();
        is_visible.insert(fid, true);
        let mut i = 0;
        while i < visible.len() {
            let f = visible[i];
            i += 1;
            let v = faces[f].v;
            for k in 0..3 {
                let nb = edge_face[&(v[(k + 1) % 3], v[k])];
                if is_visible.contains_key(&nb) {
                    continue;
                }
                let vis = faces[nb].dist(eye_p) > eps;
                is_visible.insert(nb, vis);
                if vis {
                    visible.push(nb);
                }
            }
        }

        let mut horizon = Vec::new();
        let mut orphans = Vec::new();
        for &f in &visible {
            let v = faces[f].v;
            for k in 0..3 {
                let nb = edge_face[&(v[(k + 1) % 3], v[k])];
                if !is_visible[&nb] {
                    horizon.push((v[k], v[(k + 1) % 3]));
                }
            }
        }
        for &f in &visible {
            let v = faces[f].v;
            faces[f].alive = false;
            orphans.append(&mut faces[f].outside);
            for k in 0..3 {
                let key = (v[k], v[(k + 1) % 3]);
                if edge_face.get(&key) == Some(&f) {
                    edge_face.remove(&key);
                }
            }
        }

        let mut new_faces = Vec::with_capacity(horizon.len());
        for &(a, b) in &horizon {
            new_faces.push(add_face(&mut faces, &mut edge_face, [a, b, eye]));
        }
        for p in orphans {
            if p == eye {
                continue;
            }
            if let Some(&f) = new_faces.iter().find(|&&f| faces[f].dist(pts[p]) > eps) {
                faces[f].outside.push(p);
            }
        }
        for &f in new_faces.iter().rev() {
            if !faces[f].outside.is_empty() {
                pending.push(f);
            }
        }
    }

    let tris: Vec<[usize; 3]> = faces.iter().filter(|f| f.alive).map(|f| f.v).collect();
    let mut mesh = TriangleMesh::from_raw(pts.to_vec(), tris);
    mesh.compact();
    Ok(mesh)
}

fn argmax(n: usize, key: impl Fn(usize) -> f64) -> usize {
    (0..n)
        .max_by(|&a, &b| key(a).total_cmp(&key(b)).then(b.cmp(&a)))
        .unwrap()
}
