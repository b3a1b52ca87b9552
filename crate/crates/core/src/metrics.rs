//! Evaluation metrics between reconstructed and reference surfaces:
//! F-score, Chamfer distance, earth mover's distance and normal
//! consistency.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::mesh::{longest_extent, sample_surface_with_normals, TriangleMesh};
use crate::spatial::KdTree;

/// Largest set size solved by the exact assignment algorithm; larger sets
/// use entropic transport.
pub const EMD_EXACT_LIMIT: usize = 2048;

/// Unsquared nearest-neighbour distance from every point of `from` to `to`.
pub fn nearest_distances(from: &[Vec3], to: &[Vec3]) -> Vec<f64> {
    let tree = KdTree::new(to);
    from.iter().map(|&p| tree.nearest(p).1.sqrt()).collect()
}

/// F-score in percent at `threshold`, in the coordinates given.
pub fn f_score(pred_points: &[Vec3], gt_points: &[Vec3], threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(Error::Parameter(format!("F-score threshold must be > 0, got {threshold}")));
    }
    if pred_points.is_empty() || gt_points.is_empty() {
        return Err(Error::Parameter("F-score needs non-empty point sets".into()));
    }
    let within = |d: &[f64]| d.iter().filter(|&&x| x <= threshold).count() as f64 / d.len() as f64;
    let precision = within(&nearest_distances(pred_points, gt_points));
    let recall = within(&nearest_distances(gt_points, pred_points));
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(200.0 * precision * recall / (precision + recall))
}

/// Mean unsquared nearest distance, summed over both directions.
pub fn chamfer_metric(pred_points: &[Vec3], gt_points: &[Vec3]) -> f64 {
    let mean = |d: Vec<f64>| d.iter().sum::<f64>() / d.len().max(1) as f64;
    mean(nearest_distances(gt_points, pred_points)) + mean(nearest_distances(pred_points, gt_points))
}

/// Mean per-point cost of the optimal perfect matching between equal-size
/// sets. Exact up to [`EMD_EXACT_LIMIT`] points, entropic above.
pub fn emd_metric(pred_points: &[Vec3], gt_points: &[Vec3]) -> Result<f64> {
    if pred_points.len() != gt_points.len() {
        return Err(Error::Parameter(format!(
            "EMD needs equal sizes, got {} and {}",
            pred_points.len(),
            gt_points.len()
        )));
    }
    if pred_points.is_empty() {
        return Ok(0.0);
    }
    if pred_points.len() <= EMD_EXACT_LIMIT {
        Ok(emd_exact(pred_points, gt_points))
    } else {
        Ok(emd_sinkhorn(pred_points, gt_points))
    }
}

fn cost_matrix(a: &[Vec3], b: &[Vec3]) -> Vec<f64> {
    let mut c = Vec::with_capacity(a.len() * b.len());
    for &p in a {
        for &q in b {
            c.push(geom::dist2(p, q).sqrt());
        }
    }
    c
}

/// Exact matching cost via the Hungarian algorithm with potentials.
pub fn emd_exact(a: &[Vec3], b: &[Vec3]) -> f64 {
    let n = a.len();
    assert_eq!(n, b.len());
    let cost = cost_matrix(a, b);
    let assignment = hungarian(&cost, n);
    assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>() / n as f64
}

// Row -> column assignment minimising the total of an n x n cost matrix.
fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    // 1-based potentials; column 0 is a virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

/// Transport cost of the log-domain Sinkhorn plan with a decreasing
/// regularisation schedule. Column marginals are exact after the final
/// update; row marginals are exact only up to convergence.
pub fn emd_sinkhorn(a: &[Vec3], b: &[Vec3]) -> f64 {
    let n = a.len();
    let cost = cost_matrix(a, b);
    let mean_cost = cost.iter().sum::<f64>() / cost.len() as f64;
    if mean_cost == 0.0 {
        return 0.0;
    }
    let final_eps = 5e-4 * mean_cost;
    let mut eps = mean_cost;
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut buf = vec![0.0; n];
    loop {
        let iters = if eps <= final_eps { 400 } else { 40 };
        for _ in 0..iters {
            for i in 0..n {
                let row = &cost[i * n..(i + 1) * n];
                for j in 0..n {
                    buf[j] = (g[j] - row[j]) / eps;
                }
                f[i] = -eps * log_sum_exp(&buf);
            }
            for j in 0..n {
                for i in 0..n {
                    buf[i] = (f[i] - cost[i * n + j]) / eps;
                }
                g[j] = -eps * log_sum_exp(&buf);
            }
        }
        if eps <= final_eps {
            break;
        }
        eps = (eps * 0.5).max(final_eps);
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let c = cost[i * n + j];
            total += ((f[i] + g[j] - c) / eps).exp() * c;
        }
    }
    // plan entries carry mass 1/n each row; total is already the per-point mean
    total / n as f64
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + x.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// Symmetric mean of `|n . n'|` between each sample and its nearest sample
/// on the other set.
pub fn normal_consistency_samples(
    pred_points: &[Vec3],
    pred_normals: &[Vec3],
    gt_points: &[Vec3],
    gt_normals: &[Vec3],
) -> f64 {
    let one_way = |from: &[Vec3], from_n: &[Vec3], to: &[Vec3], to_n: &[Vec3]| {
        let tree = KdTree::new(to);
        from.iter()
            .zip(from_n)
            .map(|(&p, &n)| geom::dot(n, to_n[tree.nearest(p).0]).abs())
            .sum::<f64>()
            / from.len().max(1) as f64
    };
    0.5 * (one_way(pred_points, pred_normals, gt_points, gt_normals)
        + one_way(gt_points, gt_normals, pred_points, pred_normals))
}

/// Normal consistency from `k` face-normal samples on each mesh. The
/// reference mesh is sampled with `seed + 1`.
pub fn normal_consistency(pred_mesh: &TriangleMesh, gt_mesh: &TriangleMesh, k: usize, seed: u64) -> f64 {
    let (pp, pn) = sample_surface_with_normals(pred_mesh, k, seed);
    let (gp, gn) = sample_surface_with_normals(gt_mesh, k, seed.wrapping_add(1));
    normal_consistency_samples(&pp, &pn, &gp, &gn)
}

/// Sampling and normalisation settings of the evaluation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalProtocol {
    pub samples: usize,
    /// F-score threshold in the frame where the reference spans 100.
    pub threshold: f64,
    pub emd_points: usize,
    pub seed: u64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            samples: 500_000,
            threshold: 0.1,
            emd_points: 1024,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub f_score: f64,
    pub chamfer: f64,
    pub emd: f64,
    pub normal_consistency: f64,
}

impl MetricReport {
    pub const KEYS: [&'static str; 4] = ["f_score", "chamfer", "emd", "normal_consistency"];

    pub fn values(&self) -> [f64; 4] {
        [self.f_score, self.chamfer, self.emd, self.normal_consistency]
    }

    /// `key=value` lines in [`Self::KEYS`] order.
    pub fn to_kv(&self) -> String {
        Self::KEYS
            .iter()
            .zip(self.values())
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidData(format!("malformed metric line `{line}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidData(format!("non-numeric metric `{line}`")))?;
            map.insert(k.trim().to_string(), v);
        }
        let get = |k: &str| map.get(k).copied().ok_or_else(|| Error::InvalidData(format!("missing metric `{k}`")));
        Ok(MetricReport {
            f_score: get("f_score")?,
            chamfer: get("chamfer")?,
            emd: get("emd")?,
            normal_consistency: get("normal_consistency")?,
        })
    }

    /// Arithmetic mean of each field.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let sum = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(MetricReport {
            f_score: sum(|r| r.f_score),
            chamfer: sum(|r| r.chamfer),
            emd: sum(|r| r.emd),
            normal_consistency: sum(|r| r.normal_consistency),
        })
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "F={:.3} CD={:.6} EMD={:.6} NC={:.4}",
            self.f_score, self.chamfer, self.emd, self.normal_consistency
        )
    }
}

/// Surface samples of both meshes expressed in the two metric frames.
#[derive(Debug, Clone)]
pub struct EvalSamples {
    /// Reference longest bounding-box side scaled to 1.
    pub pred_unit: Vec<Vec3>,
    pub gt_unit: Vec<Vec3>,
    /// Reference longest bounding-box side scaled to 100.
    pub pred_100: Vec<Vec3>,
    pub gt_100: Vec<Vec3>,
    pub pred_normals: Vec<Vec3>,
    pub gt_normals: Vec<Vec3>,
}

impl EvalSamples {
    pub fn draw(pred: &TriangleMesh, gt: &TriangleMesh, protocol: &EvalProtocol) -> Result<Self> {
        if protocol.samples == 0 {
            return Err(Error::Parameter("evaluation needs at least one sample".into()));
        }
        let (pp, pred_normals) = sample_surface_with_normals(pred, protocol.samples, protocol.seed);
        let (gp, gt_normals) = sample_surface_with_normals(gt, protocol.samples, protocol.seed);
        let extent = longest_extent(&gt.vertices);
        if !(extent > 0.0) {
            return Err(Error::Degenerate("reference mesh has zero extent".into()));
        }
        let scaled = |pts: &[Vec3], s: f64| pts.iter().map(|&p| geom::scale(p, s)).collect::<Vec<_>>();
        Ok(EvalSamples {
            pred_unit: scaled(&pp, 1.0 / extent),
            gt_unit: scaled(&gp, 1.0 / extent),
            pred_100: scaled(&pp, 100.0 / extent),
            gt_100: scaled(&gp, 100.0 / extent),
            pred_normals,
            gt_normals,
        })
    }

    /// Seeded equal-size subsamples for the matching metric.
    pub fn emd_subsets(&self, m: usize, seed: u64) -> (Vec<Vec3>, Vec<Vec3>) {
        // one stream per set, so identical inputs give identical subsets
        let pick = |pts: &[Vec3]| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = m.min(pts.len());
            index::sample(&mut rng, pts.len(), m)
                .into_iter()
                .map(|i| pts[i])
                .collect::<Vec<_>>()
        };
        let a = pick(&self.pred_unit);
        let b = pick(&self.gt_unit);
        (a, b)
    }

    pub fn report(&self, protocol: &EvalProtocol) -> Result<MetricReport> {
        let (ea, eb) = self.emd_subsets(protocol.emd_points, protocol.seed.wrapping_add(2));
        Ok(MetricReport {
            f_score: f_score(&self.pred_100, &self.gt_100, protocol.threshold)?,
            chamfer: chamfer_metric(&self.pred_unit, &self.gt_unit),
            emd: emd_metric(&ea, &eb)?,
            normal_consistency: normal_consistency_samples(
                &self.pred_unit,
                &self.pred_normals,
                &self.gt_unit,
                &self.gt_normals,
            ),
        })
    }
}

/// Full metric report of `pred` against `gt` under `protocol`.
pub fn evaluate_meshes(pred: &TriangleMesh, gt: &TriangleMesh, protocol: &EvalProtocol) -> Result<MetricReport> {
    EvalSamples::draw(pred, gt, protocol)?.report(protocol)
}
