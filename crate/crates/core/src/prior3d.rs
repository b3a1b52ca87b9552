//! Edge-graph self-prior: a residual mesh-convolution network that maps a
//! fixed random per-edge input to per-edge vertex displacements, fitted to
//! a single point cloud.

use std::collections::HashMap;

use ndarray::{Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::losses::{geometry_loss_and_grad, ChamferTarget, LossBreakdown, LossWeights};
use crate::mesh::{build_edge_topology, sample_surface, CollapseMesh, EdgeTopology, TriangleMesh};
use crate::nn::{derive_seed, gaussian, Adam, Param};

/// Input and output channels per edge: two endpoints times three axes.
pub const EDGE_CHANNELS: usize = 6;
/// Per-step surface sample cap.
pub const MAX_SAMPLES_PER_STEP: usize = 25_000;
/// Initial weight scale of the convolutions producing the network output,
/// so the first displacements are small relative to the unit frame.
const OUTPUT_INIT_SCALE: f64 = 1e-2;

const SEED_NOISE: u64 = 1;
const SEED_WEIGHTS: u64 = 2;
const SEED_SAMPLES: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Prior3DConfig {
    pub residual_blocks: usize,
    pub convs_per_block: usize,
    /// `[in, out]` channels of each residual block.
    pub channel_plan: Vec<[usize; 2]>,
    /// Keep fractions of the two pooling layers.
    pub pool_proportions: [f64; 2],
    pub steps: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    /// Surface samples per step; 0 means the cloud size capped at
    /// [`MAX_SAMPLES_PER_STEP`].
    pub samples_per_step: usize,
    pub seed: u64,
}

impl Default for Prior3DConfig {
    fn default() -> Self {
        Prior3DConfig {
            residual_blocks: 6,
            convs_per_block: 3,
            channel_plan: vec![[6, 32], [32, 64], [64, 128], [128, 128], [128, 64], [64, 6]],
            pool_proportions: [0.8, 0.8],
            steps: 2000,
            learning_rate: 1e-3,
            weights: LossWeights::default(),
            samples_per_step: 0,
            seed: 0,
        }
    }
}

impl Prior3DConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.residual_blocks != 6 || self.channel_plan.len() != 6 {
            return bad(format!(
                "the network has six residual blocks; got residual_blocks={} and {} channel pairs",
                self.residual_blocks,
                self.channel_plan.len()
            ));
        }
        if self.convs_per_block < 2 {
            return bad(format!("convs_per_block must be >= 2, got {}", self.convs_per_block));
        }
        if self.channel_plan[0][0] != EDGE_CHANNELS || self.channel_plan[5][1] != EDGE_CHANNELS {
            return bad("channel plan must start and end with 6 channels".into());
        }
        for w in self.channel_plan.windows(2) {
            if w[0][1] != w[1][0] {
                return bad(format!("channel plan does not chain: {:?} -> {:?}", w[0], w[1]));
            }
        }
        if self.channel_plan.iter().flatten().any(|&c| c == 0) {
            return bad("channel counts must be positive".into());
        }
        for &p in &self.pool_proportions {
            if !(p > 0.0 && p <= 1.0) {
                return bad(format!("pool proportion must be in (0, 1], got {p}"));
            }
        }
        if self.steps == 0 {
            return bad("steps must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.weights.lambda0 >= 0.0 && self.weights.lambda1 >= 0.0) {
            return bad("loss weights must be >= 0".into());
        }
        Ok(())
    }
}

/// Fixed `E x 6` standard-normal network input.
pub fn init_edge_noise(topology: &EdgeTopology, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gaussian(topology.num_edges(), EDGE_CHANNELS, 1.0, &mut rng)
}

/// Symmetric neighbourhood features `(e, |a-c|, a+c, |b-d|, b+d)` per edge,
/// laid out as five consecutive blocks of `C` columns.
pub fn gather_neighborhoods(x: &Array2<f64>, neighbors: &[[usize; 4]]) -> Array2<f64> {
    let (ne, c) = x.dim();
    let mut g = Array2::zeros((ne, 5 * c));
    for (e, &[a, b, cc, d]) in neighbors.iter().enumerate() {
        let (xe, xa, xb, xc, xd) = (x.row(e), x.row(a), x.row(b), x.row(cc), x.row(d));
        let mut row = g.row_mut(e);
        for i in 0..c {
            row[i] = xe[i];
            row[c + i] = (xa[i] - xc[i]).abs();
            row[2 * c + i] = xa[i] + xc[i];
            row[3 * c + i] = (xb[i] - xd[i]).abs();
            row[4 * c + i] = xb[i] + xd[i];
        }
    }
    g
}

/// Adjoint of [`gather_neighborhoods`] at `x`.
fn scatter_neighborhoods(dg: &Array2<f64>, x: &Array2<f64>, neighbors: &[[usize; 4]]) -> Array2<f64> {
    let (ne, c) = x.dim();
    let mut dx = Array2::zeros((ne, c));
    for (e, &[a, b, cc, d]) in neighbors.iter().enumerate() {
        let row = dg.row(e);
        for i in 0..c {
            let sac = sign(x[[a, i]] - x[[cc, i]]);
            let sbd = sign(x[[b, i]] - x[[d, i]]);
            dx[[e, i]] += row[i];
            dx[[a, i]] += sac * row[c + i] + row[2 * c + i];
            dx[[cc, i]] += -sac * row[c + i] + row[2 * c + i];
            dx[[b, i]] += sbd * row[3 * c + i] + row[4 * c + i];
            dx[[d, i]] += -sbd * row[3 * c + i] + row[4 * c + i];
        }
    }
    dx
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Bias-free mesh convolution with a `C_out x C_in x 5` kernel.
pub fn mesh_conv(features: &Array2<f64>, topology: &EdgeTopology, kernel: &Array3<f64>) -> Result<Array2<f64>> {
    let (ne, cin) = features.dim();
    let (_, kin, slots) = kernel.dim();
    if ne != topology.num_edges() || kin != cin || slots != 5 {
        return Err(Error::Parameter(format!(
            "mesh_conv shapes: features {ne}x{cin}, kernel {:?}, {} edges",
            kernel.dim(),
            topology.num_edges()
        )));
    }
    let g = gather_neighborhoods(features, &topology.filled_neighbors());
    Ok(g.dot(&kernel_matrix(kernel)))
}

/// `(5 C_in) x C_out` matrix form of a `C_out x C_in x 5` kernel.
pub fn kernel_matrix(kernel: &Array3<f64>) -> Array2<f64> {
    let (cout, cin, _) = kernel.dim();
    Array2::from_shape_fn((5 * cin, cout), |(r, o)| kernel[[o, r % cin, r / cin]])
}

/// Mesh convolution layer with bias. Weights are stored in matrix form.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshConv {
    pub weight: Param,
    pub bias: Param,
}

impl MeshConv {
    pub fn new(cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = 5 * cin;
        let weight = Param::fan_in_uniform(fan_in, cout, fan_in, rng);
        let bias = Param::fan_in_uniform(1, cout, fan_in, rng);
        MeshConv { weight, bias }
    }

    pub fn forward(&self, x: &Array2<f64>, neighbors: &[[usize; 4]]) -> Array2<f64> {
        gather_neighborhoods(x, neighbors).dot(&self.weight.value) + &self.bias.value
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, dy: &Array2<f64>, x: &Array2<f64>, neighbors: &[[usize; 4]]) -> Array2<f64> {
        let g = gather_neighborhoods(x, neighbors);
        self.weight.grad += &g.t().dot(dy);
        self.bias.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dg = dy.dot(&self.weight.value.t());
        scatter_neighborhoods(&dg, x, neighbors)
    }
}

/// Mapping from original to pooled edges produced by [`mesh_pool`].
#[derive(Debug, Clone, PartialEq)]
pub struct PoolRecord {
    /// Pooled edge receiving each original edge.
    pub group: Vec<usize>,
    /// Number of original edges merged into each pooled edge.
    pub counts: Vec<usize>,
    /// Number of edge collapses performed.
    pub collapses: usize,
}

impl PoolRecord {
    fn identity(ne: usize) -> Self {
        PoolRecord {
            group: (0..ne).collect(),
            counts: vec![1; ne],
            collapses: 0,
        }
    }

    pub fn pooled_edges(&self) -> usize {
        self.counts.len()
    }
}

/// Coarsened mesh and its edge graph.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledMesh {
    pub mesh: TriangleMesh,
    pub topology: EdgeTopology,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Collapses edges in ascending feature-norm order until at most
/// `ceil(keep_fraction * E)` remain or no admissible collapse is left.
/// Features of merged edges are averaged.
pub fn mesh_pool(
    features: &Array2<f64>,
    mesh: &TriangleMesh,
    topology: &EdgeTopology,
    keep_fraction: f64,
) -> Result<(Array2<f64>, PooledMesh, PoolRecord)> {
    let ne = topology.num_edges();
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::Parameter(format!("keep_fraction must be in (0, 1], got {keep_fraction}")));
    }
    if features.nrows() != ne {
        return Err(Error::Parameter(format!("{} feature rows for {ne} edges", features.nrows())));
    }
    let target = (keep_fraction * ne as f64).ceil() as usize;
    if target >= ne {
        let pooled = PooledMesh {
            mesh: mesh.clone(),
            topology: topology.clone(),
        };
        return Ok((features.clone(), pooled, PoolRecord::identity(ne)));
    }

    let norms: Vec<f64> = features.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut order: Vec<usize> = (0..ne).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));

    let mut cm = CollapseMesh::new(mesh);
    let mut key_id: HashMap<(usize, usize), usize> = topology
        .edges
        .iter()
        .enumerate()
        .map(|(e, &[a, b])| (edge_key(a, b), e))
        .collect();
    let mut ends: Vec<Option<[usize; 2]>> = topology.edges.iter().map(|&e| Some(e)).collect();
    let mut parent: Vec<usize> = (0..ne).collect();
    let mut live = ne;
    let mut collapses = 0;
    for &e in &order {
        if live <= target {
            break;
        }
        let Some([a, b]) = ends[e] else { continue };
        if !cm.can_collapse(a, b) {
            continue;
        }
        let opp = cm.opposite(a, b);
        let ring_b = cm.neighbors(b);
        let mid = crate::geom::scale(crate::geom::add(cm.positions[a], cm.positions[b]), 0.5);
        cm.collapse(a, b, mid);
        key_id.remove(&edge_key(a, b));
        ends[e] = None;
        parent[e] = key_id[&edge_key(a, opp[0])];
        for x in ring_b.into_iter().filter(|&x| x != a) {
            let id = key_id.remove(&edge_key(b, x)).expect("edge of collapsed vertex");
            match key_id.get(&edge_key(a, x)) {
                Some(&kept) => {
                    parent[id] = kept;
                    ends[id] = None;
                }
                None => {
                    key_id.insert(edge_key(a, x), id);
                    ends[id] = Some([a, x]);
                }
            }
        }
        live -= 3;
        collapses += 1;
    }

    let (pooled_mesh, vmap) = cm.to_mesh();
    let pooled_topology = build_edge_topology(&pooled_mesh)?;
    let index: HashMap<(usize, usize), usize> = pooled_topology
        .edges
        .iter()
        .enumerate()
        .map(|(i, &[a, b])| (edge_key(a, b), i))
        .collect();
    let mut group = vec![0; ne];
    let mut counts = vec![0; pooled_topology.num_edges()];
    for e in 0..ne {
        let mut r = e;
        while parent[r] != r {
            r = parent[r];
        }
        let [a, b] = ends[r].expect("root edge is alive");
        let key = edge_key(vmap[a].expect("live vertex"), vmap[b].expect("live vertex"));
        group[e] = index[&key];
        counts[group[e]] += 1;
    }
    let record = PoolRecord {
        group,
        counts,
        collapses,
    };
    let pooled_features = pool_forward(features, &record);
    Ok((
        pooled_features,
        PooledMesh {
            mesh: pooled_mesh,
            topology: pooled_topology,
        },
        record,
    ))
}

fn pool_forward(x: &Array2<f64>, record: &PoolRecord) -> Array2<f64> {
    let mut out = Array2::zeros((record.pooled_edges(), x.ncols()));
    for (e, &g) in record.group.iter().enumerate() {
        let mut row = out.row_mut(g);
        row.scaled_add(1.0 / record.counts[g] as f64, &x.row(e));
    }
    out
}

fn pool_backward(dy: &Array2<f64>, record: &PoolRecord) -> Array2<f64> {
    Array2::from_shape_fn((record.group.len(), dy.ncols()), |(e, c)| {
        let g = record.group[e];
        dy[[g, c]] / record.counts[g] as f64
    })
}

/// Copies each pooled edge's features back to every original edge it
/// absorbed.
pub fn mesh_unpool(features: &Array2<f64>, record: &PoolRecord) -> Result<Array2<f64>> {
    if features.nrows() != record.pooled_edges() {
        return Err(Error::Parameter(format!(
            "unpool got {} rows, record has {} pooled edges",
            features.nrows(),
            record.pooled_edges()
        )));
    }
    Ok(features.select(Axis(0), &record.group))
}

fn unpool_backward(dy: &Array2<f64>, record: &PoolRecord) -> Array2<f64> {
    let mut out = Array2::zeros((record.pooled_edges(), dy.ncols()));
    for (e, &g) in record.group.iter().enumerate() {
        let mut row = out.row_mut(g);
        row += &dy.row(e);
    }
    out
}

/// Moves every vertex by the mean of the displacement votes of its edges.
/// `delta` is `E x 6`: columns 0..3 move `edges[e][0]`, 3..6 `edges[e][1]`.
pub fn apply_edge_displacements(mesh: &TriangleMesh, topology: &EdgeTopology, delta: &Array2<f64>) -> Result<TriangleMesh> {
    if delta.dim() != (topology.num_edges(), EDGE_CHANNELS) {
        return Err(Error::Parameter(format!(
            "displacements {:?} for {} edges",
            delta.dim(),
            topology.num_edges()
        )));
    }
    let disp = vertex_displacements(mesh.num_vertices(), topology, delta);
    let mut out = mesh.clone();
    for (v, d) in out.vertices.iter_mut().zip(&disp) {
        *v = crate::geom::add(*v, *d);
    }
    Ok(out)
}

fn vertex_displacements(nv: usize, topology: &EdgeTopology, delta: &Array2<f64>) -> Vec<Vec3> {
    let mut sum = vec![[0.0; 3]; nv];
    let mut votes = vec![0usize; nv];
    for (e, ends) in topology.edges.iter().enumerate() {
        for (side, &v) in ends.iter().enumerate() {
            for k in 0..3 {
                sum[v][k] += delta[[e, 3 * side + k]];
            }
            votes[v] += 1;
        }
    }
    sum.iter()
        .zip(&votes)
        .map(|(s, &n)| if n == 0 { [0.0; 3] } else { crate::geom::scale(*s, 1.0 / n as f64) })
        .collect()
}

fn displacement_backward(vertex_grad: &[Vec3], topology: &EdgeTopology) -> Array2<f64> {
    let mut votes = vec![0usize; vertex_grad.len()];
    for &[a, b] in &topology.edges {
        votes[a] += 1;
        votes[b] += 1;
    }
    let mut out = Array2::zeros((topology.num_edges(), EDGE_CHANNELS));
    for (e, ends) in topology.edges.iter().enumerate() {
        for (side, &v) in ends.iter().enumerate() {
            for k in 0..3 {
                out[[e, 3 * side + k]] = vertex_grad[v][k] / votes[v] as f64;
            }
        }
    }
    out
}

// Resolution level each block runs at: pools follow blocks 1 and 2,
// unpools precede blocks 4 and 5.
fn block_level(block: usize) -> usize {
    match block {
        0 | 1 | 5 => 0,
        2 | 4 => 1,
        _ => 2,
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ResBlock {
    convs: Vec<MeshConv>,
    final_relu: bool,
}

#[derive(Debug, Clone)]
struct BlockCache {
    /// Input of each convolution.
    inputs: Vec<Array2<f64>>,
    /// Output of each convolution before activation.
    pre: Vec<Array2<f64>>,
    /// Residual sum before the block activation.
    sum: Array2<f64>,
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

fn relu_mask(d: &Array2<f64>, pre: &Array2<f64>) -> Array2<f64> {
    let mut out = d.clone();
    ndarray::Zip::from(&mut out).and(pre).for_each(|o, &p| {
        if p <= 0.0 {
            *o = 0.0;
        }
    });
    out
}

impl ResBlock {
    fn forward(&self, x: &Array2<f64>, nb: &[[usize; 4]]) -> (Array2<f64>, BlockCache) {
        let mut inputs = Vec::with_capacity(self.convs.len());
        let mut pre: Vec<Array2<f64>> = Vec::with_capacity(self.convs.len());
        let mut cur = x.clone();
        for (k, conv) in self.convs.iter().enumerate() {
            let h = conv.forward(&cur, nb);
            inputs.push(cur);
            cur = if k + 1 < self.convs.len() { relu(&h) } else { Array2::zeros((0, 0)) };
            pre.push(h);
        }
        let sum = &pre[pre.len() - 1] + &pre[0];
        let out = if self.final_relu { relu(&sum) } else { sum.clone() };
        (out, BlockCache { inputs, pre, sum })
    }

    fn backward(&mut self, dout: &Array2<f64>, cache: &BlockCache, nb: &[[usize; 4]]) -> Array2<f64> {
        let dsum = if self.final_relu { relu_mask(dout, &cache.sum) } else { dout.clone() };
        let n = self.convs.len();
        let mut dh = dsum.clone();
        for k in (0..n).rev() {
            let dx = self.convs[k].backward(&dh, &cache.inputs[k], nb);
            if k == 0 {
                return dx;
            }
            dh = relu_mask(&dx, &cache.pre[k - 1]);
            if k == 1 {
                dh += &dsum;
            }
        }
        unreachable!("blocks have at least two convolutions")
    }
}

/// Activations recorded by [`MeshNet::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    neighbors: Vec<Vec<[usize; 4]>>,
    records: Vec<PoolRecord>,
    caches: Vec<BlockCache>,
}

impl Tape {
    /// Edge counts at the three resolution levels.
    pub fn level_edges(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }
}

/// The six-block residual edge network with two pool/unpool pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshNet {
    blocks: Vec<ResBlock>,
    pool_proportions: [f64; 2],
}

impl MeshNet {
    pub fn new(config: &Prior3DConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = config.channel_plan.len() - 1;
        let blocks = config
            .channel_plan
            .iter()
            .enumerate()
            .map(|(i, &[cin, cout])| {
                let mut convs: Vec<MeshConv> = (0..config.convs_per_block)
                    .map(|k| MeshConv::new(if k == 0 { cin } else { cout }, cout, &mut rng))
                    .collect();
                if i == last {
                    let n = convs.len();
                    for k in [0, n - 1] {
                        convs[k].weight.value *= OUTPUT_INIT_SCALE;
                        convs[k].bias.value.fill(0.0);
                    }
                }
                ResBlock {
                    convs,
                    final_relu: i != last,
                }
            })
            .collect();
        Ok(MeshNet {
            blocks,
            pool_proportions: config.pool_proportions,
        })
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.blocks
            .iter_mut()
            .flat_map(|b| b.convs.iter_mut())
            .flat_map(|c| [&mut c.weight, &mut c.bias])
            .collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn forward(&self, z: &Array2<f64>, mesh: &TriangleMesh, topology: &EdgeTopology) -> Result<(Array2<f64>, Tape)> {
        if z.dim() != (topology.num_edges(), self.blocks[0].convs[0].weight.value.nrows() / 5) {
            return Err(Error::Parameter(format!("network input {:?} does not match the mesh", z.dim())));
        }
        // levels[0] is the input mesh, levels[1] and levels[2] the pooled ones
        let mut levels = vec![topology.filled_neighbors()];
        let mut records: Vec<PoolRecord> = Vec::new();
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut coarse = (mesh.clone(), topology.clone());
        let mut x = z.clone();
        for (i, block) in self.blocks.iter().enumerate() {
            if i == 4 || i == 5 {
                x = mesh_unpool(&x, &records[5 - i])?;
            }
            let (out, cache) = block.forward(&x, &levels[block_level(i)]);
            caches.push(cache);
            x = out;
            if i == 1 || i == 2 {
                let keep = self.pool_proportions[i - 1];
                let (pooled, next, record) = mesh_pool(&x, &coarse.0, &coarse.1, keep)?;
                levels.push(next.topology.filled_neighbors());
                coarse = (next.mesh, next.topology);
                records.push(record);
                x = pooled;
            }
        }
        Ok((
            x,
            Tape {
                neighbors: levels,
                records,
                caches,
            },
        ))
    }

    /// Accumulates parameter gradients for output gradient `dout`.
    pub fn backward(&mut self, dout: &Array2<f64>, tape: &Tape) {
        let mut d = dout.clone();
        for i in (0..self.blocks.len()).rev() {
            if i == 1 || i == 2 {
                d = pool_backward(&d, &tape.records[i - 1]);
            }
            d = self.blocks[i].backward(&d, &tape.caches[i], &tape.neighbors[block_level(i)]);
            if i == 4 || i == 5 {
                d = unpool_backward(&d, &tape.records[5 - i]);
            }
        }
    }
}

/// Loss terms at one optimization step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub step: usize,
    pub chamfer: f64,
    pub edge: f64,
    pub total: f64,
}

/// One `step chamfer edge total` line per step.
pub fn format_loss_log(log: &[StepLoss]) -> String {
    log.iter()
        .map(|l| format!("{} {:.9e} {:.9e} {:.9e}\n", l.step, l.chamfer, l.edge, l.total))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Prior3DOutcome {
    pub mesh: TriangleMesh,
    pub log: Vec<StepLoss>,
    /// Loss of the step-0 output on the step-0 samples.
    pub initial_loss: LossBreakdown,
    /// Loss of the returned mesh on the step-0 sample seed.
    pub final_loss: LossBreakdown,
}

/// Deforms `mesh` toward `cloud` and returns the deformed mesh.
pub fn optimize_3d_prior(mesh: &TriangleMesh, cloud: &[Vec3], config: &Prior3DConfig) -> Result<TriangleMesh> {
    Ok(optimize_3d_prior_logged(mesh, cloud, config)?.mesh)
}

/// [`optimize_3d_prior`] with the per-step loss log.
pub fn optimize_3d_prior_logged(mesh: &TriangleMesh, cloud: &[Vec3], config: &Prior3DConfig) -> Result<Prior3DOutcome> {
    config.validate()?;
    if cloud.is_empty() {
        return Err(Error::Parameter("3D prior needs a non-empty point cloud".into()));
    }
    if cloud.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidData("point cloud has non-finite coordinates".into()));
    }
    let topology = build_edge_topology(mesh)?;
    let z = init_edge_noise(&topology, derive_seed(config.seed, SEED_NOISE, 0));
    let mut net = MeshNet::new(config, derive_seed(config.seed, SEED_WEIGHTS, 0))?;
    let target = ChamferTarget::new(cloud);
    let k = if config.samples_per_step > 0 {
        config.samples_per_step
    } else {
        cloud.len().min(MAX_SAMPLES_PER_STEP)
    };
    let sample_seed = |step: usize| derive_seed(config.seed, SEED_SAMPLES, step as u64);
    let mut adam = Adam::new(config.learning_rate);
    let mut log = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let (out, tape) = net.forward(&z, mesh, &topology)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Optimization {
                step,
                reason: "non-finite network output".into(),
            });
        }
        let deformed = apply_edge_displacements(mesh, &topology, &out)?;
        let samples = sample_surface(&deformed, k, sample_seed(step));
        let (loss, vertex_grad) = geometry_loss_and_grad(&deformed, &topology, &samples, &target, config.weights);
        if !loss.total.is_finite() || vertex_grad.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::Optimization {
                step,
                reason: format!("non-finite loss {}", loss.total),
            });
        }
        log.push(StepLoss {
            step,
            chamfer: loss.chamfer,
            edge: loss.edge,
            total: loss.total,
        });
        net.zero_grad();
        net.backward(&displacement_backward(&vertex_grad, &topology), &tape);
        adam.step(&mut net.params_mut());
    }

    let (out, _) = net.forward(&z, mesh, &topology)?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Optimization {
            step: config.steps,
            reason: "non-finite network output".into(),
        });
    }
    let result = apply_edge_displacements(mesh, &topology, &out)?;
    let samples = sample_surface(&result, k, sample_seed(0));
    let (final_loss, _) = geometry_loss_and_grad(&result, &topology, &samples, &target, config.weights);
    if !final_loss.total.is_finite() {
        return Err(Error::Optimization {
            step: config.steps,
            reason: format!("non-finite final loss {}", final_loss.total),
        });
    }
    let first = log[0];
    Ok(Prior3DOutcome {
        mesh: result,
        initial_loss: LossBreakdown {
            chamfer: first.chamfer,
            edge: first.edge,
            total: first.total,
        },
        final_loss,
        log,
    })
}
