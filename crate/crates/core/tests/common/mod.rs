//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use selfprior::geom::{self, Vec3};
use selfprior::mesh::{convex_hull, midpoint_subdivide};
use selfprior::{PointCloud, TriangleMesh};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform random points on the sphere of `radius` about the origin.
pub fn sphere_points(n: usize, radius: f64, seed: u64) -> Vec<Vec3> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| loop {
            let v: Vec3 = [0; 3].map(|_| StandardNormal.sample(&mut r));
            let l = geom::norm(v);
            if l > 1e-9 {
                break geom::scale(v, radius / l);
            }
        })
        .collect()
}

/// Adds isotropic Gaussian noise of standard deviation `std` per axis.
pub fn jitter(points: &[Vec3], std: f64, seed: u64) -> Vec<Vec3> {
    let mut r = rng(seed);
    points
        .iter()
        .map(|p| {
            p.map(|c| {
                let z: f64 = StandardNormal.sample(&mut r);
                c + std * z
            })
        })
        .collect()
}

pub fn uniform_points(n: usize, half: f64, r: &mut ChaCha8Rng) -> Vec<Vec3> {
    (0..n).map(|_| [0; 3].map(|_| r.random_range(-half..half))).collect()
}

fn fibonacci(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let t = golden * i as f64;
            [r * t.cos(), y, r * t.sin()]
        })
        .collect()
}

/// Unit sphere: hull of `n` Fibonacci points, subdivided `levels` times
/// with every new vertex pushed back onto the sphere.
pub fn sphere_mesh(n: usize, levels: usize) -> TriangleMesh {
    let mut m = convex_hull(&PointCloud::new(fibonacci(n), None).unwrap()).unwrap();
    for _ in 0..levels {
        m = midpoint_subdivide(&m);
        for v in &mut m.vertices {
            *v = geom::normalize(*v);
        }
    }
    m
}

/// Axis-aligned cube of side 1, each square face split `levels` times.
pub fn cube_mesh(levels: usize) -> TriangleMesh {
    let v: Vec<Vec3> = (0..8)
        .map(|i| [(i & 1) as f64 - 0.5, ((i >> 1) & 1) as f64 - 0.5, ((i >> 2) & 1) as f64 - 0.5])
        .collect();
    let faces = vec![
        [0, 2, 1],
        [1, 2, 3],
        [4, 5, 6],
        [5, 7, 6],
        [0, 1, 4],
        [1, 5, 4],
        [2, 6, 3],
        [3, 6, 7],
        [0, 4, 2],
        [2, 4, 6],
        [1, 3, 5],
        [3, 7, 5],
    ];
    let mut m = TriangleMesh::new(v, faces).unwrap();
    for _ in 0..levels {
        m = midpoint_subdivide(&m);
    }
    m
}

/// Torus with tube radius `r` around a circle of radius `big_r`.
pub fn torus_mesh(big_r: f64, r: f64, nu: usize, nv: usize) -> TriangleMesh {
    let tau = std::f64::consts::TAU;
    let mut verts = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = tau * i as f64 / nu as f64;
        for j in 0..nv {
            let w = tau * j as f64 / nv as f64;
            let rho = big_r + r * w.cos();
            verts.push([rho * u.cos(), rho * u.sin(), r * w.sin()]);
        }
    }
    let id = |i: usize, j: usize| (i % nu) * nv + (j % nv);
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    TriangleMesh::new(verts, faces).unwrap()
}

/// Convex hull of `n` random points in a cube.
pub fn random_hull(n: usize, r: &mut ChaCha8Rng) -> TriangleMesh {
    loop {
        if let Ok(m) = convex_hull(&PointCloud::new(uniform_points(n, 1.0, r), None).unwrap()) {
            return m;
        }
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Squared distance to the nearest point of `to`, lowest index on ties.
pub fn brute_nearest(p: Vec3, to: &[Vec3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, &q) in to.iter().enumerate() {
        let d = geom::dist2(p, q);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn brute_chamfer_loss(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().map(|&p| brute_nearest(p, b).1).sum::<f64>() + b.iter().map(|&q| brute_nearest(q, a).1).sum::<f64>()
}

pub fn brute_mean_nn(from: &[Vec3], to: &[Vec3]) -> f64 {
    from.iter().map(|&p| brute_nearest(p, to).1.sqrt()).sum::<f64>() / from.len() as f64
}

pub fn brute_chamfer_metric(a: &[Vec3], b: &[Vec3]) -> f64 {
    brute_mean_nn(a, b) + brute_mean_nn(b, a)
}

pub fn brute_f_score(pred: &[Vec3], gt: &[Vec3], t: f64) -> f64 {
    let frac = |from: &[Vec3], to: &[Vec3]| {
        from.iter().filter(|&&p| brute_nearest(p, to).1.sqrt() <= t).count() as f64 / from.len() as f64
    };
    let (p, r) = (frac(pred, gt), frac(gt, pred));
    if p + r == 0.0 {
        0.0
    } else {
        200.0 * p * r / (p + r)
    }
}

/// Minimum mean matching cost over all permutations (Heap's algorithm).
pub fn brute_emd(a: &[Vec3], b: &[Vec3]) -> f64 {
    let n = a.len();
    let cost = |perm: &[usize]| (0..n).map(|i| geom::dist2(a[i], b[perm[i]]).sqrt()).sum::<f64>();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = cost(&perm);
    let mut c = vec![0; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best / n as f64
}

/// `sum_p sum_{k in ring(p)} |p - k|^2` with rings collected from faces.
pub fn brute_edge_loss(mesh: &TriangleMesh) -> f64 {
    let mut rings = vec![std::collections::BTreeSet::new(); mesh.num_vertices()];
    for f in &mesh.faces {
        for k in 0..3 {
            rings[f[k]].insert(f[(k + 1) % 3]);
            rings[f[(k + 1) % 3]].insert(f[k]);
        }
    }
    rings
        .iter()
        .enumerate()
        .map(|(p, ring)| ring.iter().map(|&k| geom::dist2(mesh.vertices[p], mesh.vertices[k])).sum::<f64>())
        .sum()
}

pub fn brute_normal_consistency(pp: &[Vec3], pn: &[Vec3], gp: &[Vec3], gn: &[Vec3]) -> f64 {
    let one = |from: &[Vec3], fnorm: &[Vec3], to: &[Vec3], tnorm: &[Vec3]| {
        from.iter()
            .zip(fnorm)
            .map(|(&p, &n)| geom::dot(n, tnorm[brute_nearest(p, to).0]).abs())
            .sum::<f64>()
            / from.len() as f64
    };
    0.5 * (one(pp, pn, gp, gn) + one(gp, gn, pp, pn))
}

/// Relative error with a floor so near-zero pairs compare absolutely.
pub fn rel_err(fd: f64, an: f64) -> f64 {
    (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6)
}
