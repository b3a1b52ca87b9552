//! Chart segmentation by normal-cone region growth and per-chart
//! flattening by least-squares conformal maps.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::mesh::{TriangleMesh, MIN_FACE_AREA};

/// A chart flattened to the plane, in model units.
#[derive(Debug, Clone)]
pub(crate) struct FlatChart {
    pub faces: Vec<usize>,
    /// Corner coordinates of each face in `faces`.
    pub corners: Vec<[[f64; 2]; 3]>,
}

impl FlatChart {
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for c in self.corners.iter().flatten() {
            for k in 0..2 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
        (lo, hi)
    }
}

/// Faces sharing an edge with each face.
pub(crate) fn face_adjacency(mesh: &TriangleMesh) -> Vec<Vec<usize>> {
    let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (f, face) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (face[k], face[(k + 1) % 3]);
            by_edge.entry((a.min(b), a.max(b))).or_default().push(f);
        }
    }
    let mut adj = vec![Vec::new(); mesh.num_faces()];
    for (f, face) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (face[k], face[(k + 1) % 3]);
            for &g in &by_edge[&(a.min(b), a.max(b))] {
                if g != f && !adj[f].contains(&g) {
                    adj[f].push(g);
                }
            }
        }
    }
    adj
}

pub(crate) fn is_degenerate(mesh: &TriangleMesh, f: usize) -> bool {
    mesh.face_area(f) < MIN_FACE_AREA
}

/// Grows charts from the lowest unassigned face, admitting edge-adjacent
/// faces whose normal lies within the cone around the seed normal.
/// Degenerate faces join any neighbouring chart.
pub(crate) fn segment(mesh: &TriangleMesh, adjacency: &[Vec<usize>], cone_cos: f64) -> Vec<Vec<usize>> {
    let normals: Vec<Vec3> = (0..mesh.num_faces()).map(|f| mesh.face_normal(f)).collect();
    let mut owner = vec![usize::MAX; mesh.num_faces()];
    let mut charts = Vec::new();
    for seed in 0..mesh.num_faces() {
        if owner[seed] != usize::MAX {
            continue;
        }
        let id = charts.len();
        let n0 = normals[seed];
        let seed_flat = geom::norm2(n0) == 0.0;
        owner[seed] = id;
        let mut faces = vec![seed];
        let mut queue = VecDeque::from([seed]);
        while let Some(f) = queue.pop_front() {
            for &g in &adjacency[f] {
                if owner[g] != usize::MAX {
                    continue;
                }
                let ng = normals[g];
                let admit = seed_flat || geom::norm2(ng) == 0.0 || geom::dot(ng, n0) >= cone_cos;
                if admit {
                    owner[g] = id;
                    faces.push(g);
                    queue.push_back(g);
                }
            }
        }
        faces.sort_unstable();
        charts.push(faces);
    }
    charts
}

/// Merges every chart smaller than `min_faces` into the neighbouring chart
/// it shares the most edges with, smallest first. Ties go to the lower
/// chart index. Charts without neighbours are kept as they are.
pub(crate) fn absorb_small(mut charts: Vec<Vec<usize>>, adjacency: &[Vec<usize>], min_faces: usize) -> Vec<Vec<usize>> {
    let mut owner = vec![0; adjacency.len()];
    for (c, faces) in charts.iter().enumerate() {
        for &f in faces {
            owner[f] = c;
        }
    }
    let mut stranded = vec![false; charts.len()];
    loop {
        let small = (0..charts.len())
            .filter(|&c| !charts[c].is_empty() && !stranded[c] && charts[c].len() < min_faces)
            .min_by_key(|&c| (charts[c].len(), c));
        let Some(c) = small else { break };
        let mut shared: HashMap<usize, usize> = HashMap::new();
        for &f in &charts[c] {
            for &g in &adjacency[f] {
                if owner[g] != c {
                    *shared.entry(owner[g]).or_insert(0) += 1;
                }
            }
        }
        let Some((&into, _)) = shared.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) else {
            stranded[c] = true;
            continue;
        };
        let moved = std::mem::take(&mut charts[c]);
        for &f in &moved {
            owner[f] = into;
        }
        charts[into].extend(moved);
        charts[into].sort_unstable();
    }
    charts.retain(|faces| !faces.is_empty());
    charts
}

/// Splits a chart into two edge-connected halves grown from two far-apart
/// faces.
pub(crate) fn split(mesh: &TriangleMesh, adjacency: &[Vec<usize>], faces: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let centroid = |f: usize| {
        let [a, b, c] = mesh.face_points(f);
        geom::scale(geom::add(geom::add(a, b), c), 1.0 / 3.0)
    };
    let farthest = |from: Vec3| {
        faces
            .iter()
            .copied()
            .max_by(|&x, &y| geom::dist2(centroid(x), from).total_cmp(&geom::dist2(centroid(y), from)).then(y.cmp(&x)))
            .unwrap()
    };
    let a = farthest(centroid(faces[0]));
    let b = farthest(centroid(a));
    let member: HashMap<usize, usize> = faces.iter().map(|&f| (f, usize::MAX)).collect();
    let mut label = member;
    let mut queue = VecDeque::new();
    label.insert(a, 0);
    queue.push_back(a);
    if b != a {
        label.insert(b, 1);
        queue.push_back(b);
    }
    while let Some(f) = queue.pop_front() {
        let l = label[&f];
        for &g in &adjacency[f] {
            if label.get(&g) == Some(&usize::MAX) {
                label.insert(g, l);
                queue.push_back(g);
            }
        }
    }
    let mut halves = (Vec::new(), Vec::new());
    for &f in faces {
        if label[&f] == 1 {
            halves.1.push(f);
        } else {
            halves.0.push(f);
        }
    }
    if halves.1.is_empty() {
        // unreachable remainder or a single seed: peel off the last face
        let last = halves.0.pop().unwrap();
        halves.1.push(last);
    }
    halves
}

/// Flattens `faces`, splitting recursively when neither the conformal map
/// nor a planar projection is orientation preserving.
pub(crate) fn flatten_or_split(
    mesh: &TriangleMesh,
    adjacency: &[Vec<usize>],
    faces: &[usize],
    out: &mut Vec<FlatChart>,
) -> Result<()> {
    if let Some(flat) = flatten(mesh, faces) {
        out.push(flat);
        return Ok(());
    }
    if faces.len() == 1 {
        return Err(Error::AtlasQuality(format!("face {} cannot be flattened", faces[0])));
    }
    let (a, b) = split(mesh, adjacency, faces);
    flatten_or_split(mesh, adjacency, &a, out)?;
    flatten_or_split(mesh, adjacency, &b, out)
}

/// Conformal flattening with a planar-projection fallback; `None` when both
/// flip or collapse a face.
pub(crate) fn flatten(mesh: &TriangleMesh, faces: &[usize]) -> Option<FlatChart> {
    let mut local: HashMap<usize, usize> = HashMap::new();
    let mut verts = Vec::new();
    for &f in faces {
        for &v in &mesh.faces[f] {
            local.entry(v).or_insert_with(|| {
                verts.push(v);
                verts.len() - 1
            });
        }
    }
    let planar = planar_projection(mesh, faces, &verts);
    let build = |uv: &[[f64; 2]]| FlatChart {
        faces: faces.to_vec(),
        corners: faces
            .iter()
            .map(|&f| mesh.faces[f].map(|v| uv[local[&v]]))
            .collect(),
    };
    if let Some(planar) = planar {
        let lscm = conformal_map(mesh, faces, &verts, &local, &planar);
        let chart = build(&lscm);
        if orientation_preserving(mesh, &chart) {
            return Some(chart);
        }
        let chart = build(&planar);
        if orientation_preserving(mesh, &chart) {
            return Some(chart);
        }
    }
    None
}

fn orientation_preserving(mesh: &TriangleMesh, chart: &FlatChart) -> bool {
    let (lo, hi) = chart.bounds();
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    if !extent.is_finite() || extent <= 0.0 {
        return false;
    }
    let tol = 1e-14 * extent * extent;
    let oriented = chart.faces.iter().zip(&chart.corners).all(|(&f, c)| {
        let o = geom::orient2d(c[0], c[1], c[2]);
        o.is_finite() && (o > tol || is_degenerate(mesh, f))
    });
    oriented && !winds_over(mesh, chart)
}

/// Whether the UV corner angles around some vertex add up to more than a
/// full turn. Every face can be counter-clockwise while the one-ring of a
/// saddle vertex still overlaps itself.
fn winds_over(mesh: &TriangleMesh, chart: &FlatChart) -> bool {
    let mut turn: HashMap<usize, f64> = HashMap::new();
    for (&f, c) in chart.faces.iter().zip(&chart.corners) {
        if is_degenerate(mesh, f) {
            continue;
        }
        for k in 0..3 {
            let (p, a, b) = (c[k], c[(k + 1) % 3], c[(k + 2) % 3]);
            let (u, v) = ([a[0] - p[0], a[1] - p[1]], [b[0] - p[0], b[1] - p[1]]);
            let angle = (u[0] * v[1] - u[1] * v[0]).atan2(u[0] * v[0] + u[1] * v[1]);
            *turn.entry(mesh.faces[f][k]).or_insert(0.0) += angle;
        }
    }
    turn.values().any(|&t| t > std::f64::consts::TAU + 1e-6)
}

/// Projection onto the plane of the area-weighted mean normal, with a
/// right-handed basis so front-facing triangles stay counter-clockwise.
fn planar_projection(mesh: &TriangleMesh, faces: &[usize], verts: &[usize]) -> Option<Vec<[f64; 2]>> {
    let mut n = [0.0; 3];
    for &f in faces {
        let [a, b, c] = mesh.face_points(f);
        n = geom::add(n, geom::tri_normal(a, b, c));
    }
    if geom::norm(n) == 0.0 {
        return None;
    }
    let n = geom::normalize(n);
    let helper = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let t1 = geom::normalize(geom::cross(helper, n));
    let t2 = geom::cross(n, t1);
    Some(
        verts
            .iter()
            .map(|&v| {
                let p = mesh.vertices[v];
                [geom::dot(p, t1), geom::dot(p, t2)]
            })
            .collect(),
    )
}

/// Least-squares conformal map. Two far-apart vertices are pinned at their
/// planar-projection coordinates and the rest are solved by CGLS, started
/// from the projection.
fn conformal_map(
    mesh: &TriangleMesh,
    faces: &[usize],
    verts: &[usize],
    local: &HashMap<usize, usize>,
    start: &[[f64; 2]],
) -> Vec<[f64; 2]> {
    let n = verts.len();
    let pos = |i: usize| mesh.vertices[verts[i]];
    let far = |from: usize| {
        (0..n)
            .max_by(|&x, &y| geom::dist2(pos(x), pos(from)).total_cmp(&geom::dist2(pos(y), pos(from))).then(y.cmp(&x)))
            .unwrap()
    };
    let pin_a = far(0);
    let pin_b = far(pin_a);
    if pin_a == pin_b {
        return start.to_vec();
    }
    // column of each free vertex's u; v is the next column
    let mut col = vec![usize::MAX; n];
    let mut free = 0;
    for (i, c) in col.iter_mut().enumerate() {
        if i != pin_a && i != pin_b {
            *c = free;
            free += 2;
        }
    }
    if free == 0 {
        return start.to_vec();
    }

    // per face: local vertex ids and complex coefficients (re, im)
    let rows: Vec<([usize; 3], [[f64; 2]; 3])> = faces
        .iter()
        .map(|&f| {
            let [p0, p1, p2] = mesh.face_points(f);
            let e1 = geom::sub(p1, p0);
            let e2 = geom::sub(p2, p0);
            let l1 = geom::norm(e1);
            let nrm = geom::tri_normal(p0, p1, p2);
            let z = if l1 > 0.0 && geom::norm(nrm) > 0.0 {
                let ex = geom::scale(e1, 1.0 / l1);
                let ey = geom::cross(geom::normalize(nrm), ex);
                [[0.0, 0.0], [l1, 0.0], [geom::dot(e2, ex), geom::dot(e2, ey)]]
            } else {
                [[0.0; 2]; 3]
            };
            let area2 = geom::orient2d(z[0], z[1], z[2]);
            let w = if area2 > 0.0 { 1.0 / area2.sqrt() } else { 0.0 };
            let coef = [0, 1, 2].map(|k| {
                let (a, b) = (z[(k + 2) % 3], z[(k + 1) % 3]);
                [(a[0] - b[0]) * w, (a[1] - b[1]) * w]
            });
            (mesh.faces[f].map(|v| local[&v]), coef)
        })
        .collect();

    let apply = |x: &[f64], fixed: bool, out: &mut [f64]| {
        // out = A * x (2 rows per face); pinned columns read from `start`
        // only when `fixed`, free columns only when not
        for (r, (ids, coef)) in rows.iter().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for k in 0..3 {
                let i = ids[k];
                let (u, v) = if col[i] == usize::MAX {
                    if !fixed {
                        continue;
                    }
                    (start[i][0], start[i][1])
                } else {
                    if fixed {
                        continue;
                    }
                    (x[col[i]], x[col[i] + 1])
                };
                let [a, b] = coef[k];
                re += a * u - b * v;
                im += b * u + a * v;
            }
            out[2 * r] = re;
            out[2 * r + 1] = im;
        }
    };
    let apply_t = |y: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, (ids, coef)) in rows.iter().enumerate() {
            let (yr, yi) = (y[2 * r], y[2 * r + 1]);
            for k in 0..3 {
                let c = col[ids[k]];
                if c == usize::MAX {
                    continue;
                }
                let [a, b] = coef[k];
                out[c] += a * yr + b * yi;
                out[c + 1] += -b * yr + a * yi;
            }
        }
    };

    let m = 2 * rows.len();
    let mut x = vec![0.0; free];
    for i in 0..n {
        if col[i] != usize::MAX {
            x[col[i]] = start[i][0];
            x[col[i] + 1] = start[i][1];
        }
    }
    let mut b = vec![0.0; m];
    apply(&[], true, &mut b);
    b.iter_mut().for_each(|v| *v = -*v);
    let mut ax = vec![0.0; m];
    apply(&x, false, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut s = vec![0.0; free];
    apply_t(&r, &mut s);
    let mut p = s.clone();
    let mut gamma: f64 = s.iter().map(|v| v * v).sum();
    let gamma0 = gamma;
    let mut q = vec![0.0; m];
    let max_iter = 200 + 10 * free;
    for _ in 0..max_iter {
        if gamma <= 1e-24 * gamma0 || gamma == 0.0 {
            break;
        }
        apply(&p, false, &mut q);
        let qq: f64 = q.iter().map(|v| v * v).sum();
        if qq <= 0.0 || !qq.is_finite() {
            break;
        }
        let alpha = gamma / qq;
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.iter_mut().zip(&q).for_each(|(r, q)| *r -= alpha * q);
        apply_t(&r, &mut s);
        let g_new: f64 = s.iter().map(|v| v * v).sum();
        let beta = g_new / gamma;
        p.iter_mut().zip(&s).for_each(|(p, s)| *p = s + beta * *p);
        gamma = g_new;
    }
    (0..n)
        .map(|i| {
            if col[i] == usize::MAX {
                start[i]
            } else {
                [x[col[i]], x[col[i] + 1]]
            }
        })
        .collect()
}

/// Ratio of the singular values of the map from a face's 3D frame to its
/// 2D corners; infinite for collapsed images.
pub(crate) fn distortion_ratio(p: [Vec3; 3], uv: [[f64; 2]; 3]) -> f64 {
    let e1 = geom::sub(p[1], p[0]);
    let e2 = geom::sub(p[2], p[0]);
    let l1 = geom::norm(e1);
    let nrm = geom::tri_normal(p[0], p[1], p[2]);
    if l1 == 0.0 || geom::norm(nrm) == 0.0 {
        return 1.0;
    }
    let ex = geom::scale(e1, 1.0 / l1);
    let ey = geom::cross(geom::normalize(nrm), ex);
    // X = [[l1, x2], [0, y2]] maps to P = [[du1, du2], [dv1, dv2]]
    let (x2, y2) = (geom::dot(e2, ex), geom::dot(e2, ey));
    let (du1, dv1) = (uv[1][0] - uv[0][0], uv[1][1] - uv[0][1]);
    let (du2, dv2) = (uv[2][0] - uv[0][0], uv[2][1] - uv[0][1]);
    // J = P X^-1 with X^-1 = [[1/l1, -x2/(l1 y2)], [0, 1/y2]]
    let j00 = du1 / l1;
    let j10 = dv1 / l1;
    let j01 = (du2 - du1 * x2 / l1) / y2;
    let j11 = (dv2 - dv1 * x2 / l1) / y2;
    let fro = j00 * j00 + j01 * j01 + j10 * j10 + j11 * j11;
    let det = j00 * j11 - j01 * j10;
    let disc = (fro * fro - 4.0 * det * det).max(0.0).sqrt();
    let s1 = ((fro + disc) / 2.0).sqrt();
    let s2 = ((fro - disc) / 2.0).max(0.0).sqrt();
    if s2 == 0.0 {
        f64::INFINITY
    } else {
        s1 / s2
    }
}
