//! Image-space prior: an encoder-decoder with skip paths that maps a fixed
//! random feature grid (plus fresh noise each step) to a dense 3-channel
//! UV map, fitted only at sparse sub-pixel sites through bilinear sampling.
//!
//! Feature maps are `C x (H*W)` arrays in row-major pixel order, the same
//! order as [`DenseUVMap::values`].

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{derive_seed, gaussian, Adam, Param};
use crate::uvatlas::{bilinear_footprint, ChannelKind, DenseUVMap, Footprint, SparseUVSamples};

const TAG_WEIGHTS: u64 = 11;
const TAG_INPUT: u64 = 12;
const TAG_PERTURB: u64 = 13;
const LEAKY_SLOPE: f64 = 0.2;
const NORM_EPS: f64 = 1e-5;
/// Output pixels times taps per column block.
const CONV_CHUNK: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Prior2DConfig {
    pub input_channels: usize,
    pub resolution: usize,
    /// Standard deviation of the fixed input grid.
    pub z_std: f64,
    /// Standard deviation of the per-step input perturbation.
    pub eps_std: f64,
    pub steps: usize,
    pub learning_rate: f64,
    pub down_blocks: usize,
    pub up_blocks: usize,
    pub skip_blocks: usize,
    /// Channels of every encoder and decoder convolution.
    pub width: usize,
    pub skip_channels: usize,
    pub seed: u64,
}

impl Default for Prior2DConfig {
    fn default() -> Self {
        Prior2DConfig {
            input_channels: 32,
            resolution: 1024,
            z_std: 0.1,
            eps_std: 0.02,
            steps: 4000,
            learning_rate: 1e-2,
            down_blocks: 5,
            up_blocks: 5,
            skip_blocks: 5,
            width: 64,
            skip_channels: 4,
            seed: 0,
        }
    }
}

impl Prior2DConfig {
    /// Defaults for densifying the color map.
    pub fn rgb() -> Self {
        Prior2DConfig {
            steps: 2000,
            ..Prior2DConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.steps < 1 {
            return bad("2D prior needs at least one step".into());
        }
        if !(self.z_std >= 0.0 && self.eps_std >= 0.0) || !self.z_std.is_finite() || !self.eps_std.is_finite() {
            return bad("noise standard deviations must be finite and non-negative".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive".into());
        }
        if self.input_channels == 0 || self.width == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.up_blocks != self.down_blocks {
            return bad("up_blocks must equal down_blocks".into());
        }
        if self.skip_blocks > self.down_blocks {
            return bad("skip_blocks cannot exceed down_blocks".into());
        }
        if self.skip_blocks > 0 && self.skip_channels == 0 {
            return bad("skip paths need at least one channel".into());
        }
        let factor = 1usize << self.down_blocks;
        if self.resolution % factor != 0 || self.resolution / factor < 2 {
            return bad(format!(
                "resolution {} must be a multiple of {factor} with at least 2 pixels at the coarsest scale",
                self.resolution
            ));
        }
        Ok(())
    }
}

/// Samples `map` bilinearly at `[row, col]` sites.
pub fn bilinear_sample(map: &DenseUVMap, sites: &[[f64; 2]]) -> Result<Vec<[f64; 3]>> {
    sites
        .iter()
        .map(|&s| {
            map.sample(s)
                .ok_or_else(|| Error::Parameter(format!("site {s:?} lies outside the {}x{} map", map.height, map.width)))
        })
        .collect()
}

/// Gradient of `sum_s <grad_out[s], sample(map, site_s)>` with respect to
/// the map values.
pub fn bilinear_sample_backward(
    height: usize,
    width: usize,
    sites: &[[f64; 2]],
    grad_out: &[[f64; 3]],
) -> Result<DenseUVMap> {
    let mut g = DenseUVMap::filled(height, width, [0.0; 3], ChannelKind::Xyz);
    for (&s, go) in sites.iter().zip(grad_out) {
        let fp = bilinear_footprint(s, height, width)
            .ok_or_else(|| Error::Parameter(format!("site {s:?} lies outside the {height}x{width} map")))?;
        for (&p, &w) in fp.pixels.iter().zip(&fp.weights) {
            for k in 0..3 {
                g.values[p][k] += w * go[k];
            }
        }
    }
    Ok(g)
}

/// Reflection-padded convolution with `k x k` kernels.
#[derive(Debug, Clone)]
pub struct Conv2d {
    /// `cout x (k*k*cin)`; column `offset * cin + c`.
    pub weight: Param,
    /// `cout x 1`.
    pub bias: Param,
    cin: usize,
    cout: usize,
    /// Source pixel of every output pixel, per kernel offset.
    taps: Vec<Vec<u32>>,
    out_pixels: usize,
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r.clamp(0, n - 1) as usize
}

impl Conv2d {
    fn new(cin: usize, cout: usize, k: usize, stride: usize, size: (usize, usize), rng: &mut ChaCha8Rng) -> Self {
        let (h, w) = size;
        let (ho, wo) = (h.div_ceil(stride), w.div_ceil(stride));
        let p = (k / 2) as isize;
        let mut taps = Vec::with_capacity(k * k);
        for dy in -p..=p {
            for dx in -p..=p {
                let mut idx = Vec::with_capacity(ho * wo);
                for i in 0..ho {
                    for j in 0..wo {
                        let r = reflect((i * stride) as isize + dy, h);
                        let c = reflect((j * stride) as isize + dx, w);
                        idx.push((r * w + c) as u32);
                    }
                }
                taps.push(idx);
            }
        }
        let fan_in = cin * k * k;
        Conv2d {
            weight: Param::fan_in_uniform(cout, fan_in, fan_in, rng),
            bias: Param::fan_in_uniform(cout, 1, fan_in, rng),
            cin,
            cout,
            taps,
            out_pixels: ho * wo,
        }
    }

    /// Column matrix for output pixels `range`: row `tap * cin + c`.
    fn im2col(&self, x: &Array2<f64>, range: std::ops::Range<usize>) -> Array2<f64> {
        let mut g = Array2::zeros((self.taps.len() * self.cin, range.len()));
        for (tap, idx) in self.taps.iter().enumerate() {
            let idx = &idx[range.clone()];
            for (c, src) in x.outer_iter().enumerate() {
                let src = src.as_slice().expect("standard layout");
                let mut row = g.row_mut(tap * self.cin + c);
                for (o, &i) in row.iter_mut().zip(idx) {
                    *o = src[i as usize];
                }
            }
        }
        g
    }

    fn chunks(&self) -> impl Iterator<Item = std::ops::Range<usize>> {
        let step = (CONV_CHUNK / self.taps.len().max(1)).max(256);
        let n = self.out_pixels;
        (0..n.div_ceil(step)).map(move |i| i * step..((i + 1) * step).min(n))
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.cout, self.out_pixels));
        for r in self.chunks() {
            let mut o = out.slice_mut(s![.., r.clone()]);
            if self.taps.len() == 1 && self.out_pixels == x.ncols() {
                general_mat_mul(1.0, &self.weight.value, &x.slice(s![.., r]), 0.0, &mut o);
            } else {
                general_mat_mul(1.0, &self.weight.value, &self.im2col(x, r), 0.0, &mut o);
            }
        }
        out += &self.bias.value;
        out
    }

    /// Accumulates parameter gradients; returns the input gradient.
    pub fn backward(&mut self, x: &Array2<f64>, dout: &Array2<f64>) -> Array2<f64> {
        let mut dx = Array2::zeros((self.cin, x.ncols()));
        self.bias.grad += &dout.sum_axis(Axis(1)).insert_axis(Axis(1));
        let ranges: Vec<_> = self.chunks().collect();
        if self.taps.len() == 1 && self.out_pixels == x.ncols() {
            general_mat_mul(1.0, dout, &x.t(), 1.0, &mut self.weight.grad);
            general_mat_mul(1.0, &self.weight.value.t(), dout, 0.0, &mut dx);
            return dx;
        }
        for r in ranges {
            let d = dout.slice(s![.., r.clone()]);
            let col = self.im2col(x, r.clone());
            general_mat_mul(1.0, &d, &col.t(), 1.0, &mut self.weight.grad);
            let mut dcol = Array2::zeros(col.raw_dim());
            general_mat_mul(1.0, &self.weight.value.t(), &d, 0.0, &mut dcol);
            for (tap, idx) in self.taps.iter().enumerate() {
                let idx = &idx[r.clone()];
                for (c, mut dst) in dx.outer_iter_mut().enumerate() {
                    let dst = dst.as_slice_mut().expect("standard layout");
                    for (&v, &i) in dcol.row(tap * self.cin + c).iter().zip(idx) {
                        dst[i as usize] += v;
                    }
                }
            }
        }
        dx
    }
}

/// Bilinear 2x upsampling with half-pixel centres and edge clamping.
#[derive(Debug, Clone)]
pub struct Upsample {
    taps: Vec<([u32; 4], [f64; 4])>,
    in_pixels: usize,
}

impl Upsample {
    fn new(h: usize, w: usize) -> Self {
        let axis = |o: usize, n: usize| {
            let t = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (t.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, t - i0 as f64)
        };
        let mut taps = Vec::with_capacity(4 * h * w);
        for i in 0..2 * h {
            let (y0, y1, fy) = axis(i, h);
            for j in 0..2 * w {
                let (x0, x1, fx) = axis(j, w);
                taps.push((
                    [y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1].map(|v| v as u32),
                    [(1.0 - fy) * (1.0 - fx), (1.0 - fy) * fx, fy * (1.0 - fx), fy * fx],
                ));
            }
        }
        Upsample { taps, in_pixels: h * w }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.taps.len()));
        for (mut dst, src) in out.outer_iter_mut().zip(x.outer_iter()) {
            let src = src.as_slice().expect("standard layout");
            for (o, (idx, w)) in dst.iter_mut().zip(&self.taps) {
                *o = (0..4).map(|k| w[k] * src[idx[k] as usize]).sum();
            }
        }
        out
    }

    pub fn backward(&self, dout: &Array2<f64>) -> Array2<f64> {
        let mut dx = Array2::zeros((dout.nrows(), self.in_pixels));
        for (mut dst, src) in dx.outer_iter_mut().zip(dout.outer_iter()) {
            let dst = dst.as_slice_mut().expect("standard layout");
            for (&g, (idx, w)) in src.iter().zip(&self.taps) {
                for k in 0..4 {
                    dst[idx[k] as usize] += w[k] * g;
                }
            }
        }
        dx
    }
}

fn leaky(mut x: Array2<f64>) -> Array2<f64> {
    x.mapv_inplace(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v });
    x
}

/// Gradient through a leaky ReLU given its output (same sign as input).
fn leaky_backward(out: &Array2<f64>, mut d: Array2<f64>) -> Array2<f64> {
    ndarray::Zip::from(&mut d).and(out).for_each(|d, &y| {
        if y <= 0.0 {
            *d *= LEAKY_SLOPE;
        }
    });
    d
}

/// Per-channel normalization over all pixels of the single image, with a
/// learned scale and shift.
#[derive(Debug, Clone)]
pub struct Norm {
    /// `c x 1`.
    pub gamma: Param,
    /// `c x 1`.
    pub beta: Param,
}

impl Norm {
    fn new(c: usize) -> Self {
        Norm {
            gamma: Param::new(Array2::ones((c, 1))),
            beta: Param::zeros(c, 1),
        }
    }

    /// Output, normalized input and the inverse standard deviations.
    fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Vec<f64>) {
        let n = x.ncols() as f64;
        let mut xhat = x.clone();
        let mut inv = Vec::with_capacity(x.nrows());
        for mut row in xhat.outer_iter_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + NORM_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * is);
            inv.push(is);
        }
        let y = &xhat * &self.gamma.value + &self.beta.value;
        (y, xhat, inv)
    }

    fn backward(&mut self, xhat: &Array2<f64>, inv: &[f64], dy: &Array2<f64>) -> Array2<f64> {
        let n = dy.ncols() as f64;
        let mut dx = Array2::zeros(dy.raw_dim());
        for c in 0..dy.nrows() {
            let (dyr, xr) = (dy.row(c), xhat.row(c));
            let sum_dy = dyr.sum();
            let sum_dy_x: f64 = dyr.iter().zip(xr.iter()).map(|(a, b)| a * b).sum();
            self.beta.grad[[c, 0]] += sum_dy;
            self.gamma.grad[[c, 0]] += sum_dy_x;
            let k = self.gamma.value[[c, 0]] * inv[c] / n;
            for ((d, &g), &xh) in dx.row_mut(c).iter_mut().zip(dyr.iter()).zip(xr.iter()) {
                *d = k * (n * g - sum_dy - xh * sum_dy_x);
            }
        }
        dx
    }
}

/// Convolution, normalization and leaky ReLU.
#[derive(Debug, Clone)]
pub struct Unit {
    pub conv: Conv2d,
    pub norm: Norm,
}

/// Activations of one [`Unit`] kept for the backward pass.
#[derive(Debug, Clone)]
pub struct UnitCache {
    pub input: Array2<f64>,
    xhat: Array2<f64>,
    inv_std: Vec<f64>,
    pub output: Array2<f64>,
}

impl Unit {
    fn new(conv: Conv2d) -> Self {
        let norm = Norm::new(conv.cout);
        Unit { conv, norm }
    }

    fn forward(&self, x: Array2<f64>) -> UnitCache {
        let (y, xhat, inv_std) = self.norm.forward(&self.conv.forward(&x));
        UnitCache {
            input: x,
            xhat,
            inv_std,
            output: leaky(y),
        }
    }

    fn backward(&mut self, cache: &UnitCache, dout: Array2<f64>) -> Array2<f64> {
        let d = leaky_backward(&cache.output, dout);
        let d = self.norm.backward(&cache.xhat, &cache.inv_std, &d);
        self.conv.backward(&cache.input, &d)
    }

    fn params_mut(&mut self) -> [&mut Param; 4] {
        [&mut self.conv.weight, &mut self.conv.bias, &mut self.norm.gamma, &mut self.norm.beta]
    }
}

#[derive(Debug, Clone)]
struct DownBlock {
    reduce: Unit,
    conv: Unit,
}

#[derive(Debug, Clone)]
struct UpBlock {
    upsample: Upsample,
    conv: Unit,
    mix: Unit,
}

/// Encoder-decoder: stride-2 downsampling blocks, 1x1 skip paths at the
/// finest scales, bilinear upsampling blocks and a linear 1x1 head.
#[derive(Debug, Clone)]
pub struct Net2D {
    down: Vec<DownBlock>,
    skip: Vec<Unit>,
    up: Vec<UpBlock>,
    head: Conv2d,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Net2DCache {
    pub reduce: Vec<UnitCache>,
    pub down: Vec<UnitCache>,
    pub skip: Vec<UnitCache>,
    /// Up blocks indexed by scale.
    pub up_conv: Vec<UnitCache>,
    pub up_mix: Vec<UnitCache>,
    /// Width of the upsampled part of each up block's input.
    up_split: Vec<usize>,
}

/// Seeded network for `config`.
pub fn build_2d_network(config: &Prior2DConfig, seed: u64) -> Result<Net2D> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_WEIGHTS, 0));
    let d = config.down_blocks;
    let w = config.width;
    let size = |level: usize| (config.resolution >> level, config.resolution >> level);
    let mut down = Vec::with_capacity(d);
    let mut skip = Vec::with_capacity(config.skip_blocks);
    for i in 0..d {
        let cin = if i == 0 { config.input_channels } else { w };
        if i < config.skip_blocks {
            skip.push(Unit::new(Conv2d::new(cin, config.skip_channels, 1, 1, size(i), &mut rng)));
        }
        down.push(DownBlock {
            reduce: Unit::new(Conv2d::new(cin, w, 3, 2, size(i), &mut rng)),
            conv: Unit::new(Conv2d::new(w, w, 3, 1, size(i + 1), &mut rng)),
        });
    }
    let mut up = Vec::with_capacity(d);
    for i in 0..d {
        let cin = w + if i < config.skip_blocks { config.skip_channels } else { 0 };
        let (h, ww) = size(i + 1);
        up.push(UpBlock {
            upsample: Upsample::new(h, ww),
            conv: Unit::new(Conv2d::new(cin, w, 3, 1, size(i), &mut rng)),
            mix: Unit::new(Conv2d::new(w, w, 1, 1, size(i), &mut rng)),
        });
    }
    let head = Conv2d::new(w, 3, 1, 1, size(0), &mut rng);
    Ok(Net2D { down, skip, up, head })
}

impl Net2D {
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for b in &mut self.down {
            out.extend(b.reduce.params_mut());
            out.extend(b.conv.params_mut());
        }
        for u in &mut self.skip {
            out.extend(u.params_mut());
        }
        for b in &mut self.up {
            out.extend(b.conv.params_mut());
            out.extend(b.mix.params_mut());
        }
        out.extend([&mut self.head.weight, &mut self.head.bias]);
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn num_parameters(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.len()).sum()
    }

    /// Maps `C_in x (H*W)` to `3 x (H*W)`.
    pub fn forward(&self, input: &Array2<f64>) -> (Array2<f64>, Net2DCache) {
        let d = self.down.len();
        let mut reduce = Vec::with_capacity(d);
        let mut down = Vec::with_capacity(d);
        let mut skip = Vec::with_capacity(self.skip.len());
        let mut x = input.clone();
        for (i, b) in self.down.iter().enumerate() {
            if let Some(s) = self.skip.get(i) {
                skip.push(s.forward(x.clone()));
            }
            let r = b.reduce.forward(x);
            let c = b.conv.forward(r.output.clone());
            x = c.output.clone();
            reduce.push(r);
            down.push(c);
        }
        let mut up_conv: Vec<Option<UnitCache>> = vec![None; d];
        let mut up_mix: Vec<Option<UnitCache>> = vec![None; d];
        let mut up_split = vec![0; d];
        let mut y = x;
        for i in (0..d).rev() {
            let b = &self.up[i];
            let u = b.upsample.forward(&y);
            up_split[i] = u.nrows();
            let cat = match skip.get(i) {
                Some(sk) => ndarray::concatenate(Axis(0), &[u.view(), sk.output.view()]).expect("matching pixels"),
                None => u,
            };
            let c = b.conv.forward(cat);
            let m = b.mix.forward(c.output.clone());
            y = m.output.clone();
            up_conv[i] = Some(c);
            up_mix[i] = Some(m);
        }
        let out = self.head.forward(&y);
        let cache = Net2DCache {
            reduce,
            down,
            skip,
            up_conv: up_conv.into_iter().map(Option::unwrap).collect(),
            up_mix: up_mix.into_iter().map(Option::unwrap).collect(),
            up_split,
        };
        (out, cache)
    }

    /// Accumulates parameter gradients for `dout` (gradient of the loss
    /// with respect to the forward output).
    pub fn backward(&mut self, cache: &Net2DCache, dout: &Array2<f64>) {
        let d = self.down.len();
        let mut dy = self.head.backward(&cache.up_mix[0].output, dout);
        let mut dskips: Vec<Option<Array2<f64>>> = vec![None; self.skip.len()];
        for i in 0..d {
            let b = &mut self.up[i];
            let g = b.mix.backward(&cache.up_mix[i], dy);
            let dcat = b.conv.backward(&cache.up_conv[i], g);
            let wu = cache.up_split[i];
            if i < self.skip.len() {
                dskips[i] = Some(dcat.slice(s![wu.., ..]).to_owned());
            }
            dy = b.upsample.backward(&dcat.slice(s![..wu, ..]).to_owned());
        }
        // dy is now the gradient at the bottleneck
        let mut dx = dy;
        for i in (0..d).rev() {
            let b = &mut self.down[i];
            let g = b.conv.backward(&cache.down[i], dx);
            let mut dlevel = b.reduce.backward(&cache.reduce[i], g);
            if let Some(ds) = dskips[i].take() {
                dlevel += &self.skip[i].backward(&cache.skip[i], ds);
            }
            dx = dlevel;
        }
    }
}

/// Fixed input grid `z` and the scale of the per-forward perturbation.
#[derive(Debug, Clone)]
pub struct NoiseInput {
    z: Array2<f64>,
    pub eps_std: f64,
}

impl NoiseInput {
    pub fn new(config: &Prior2DConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_INPUT, 0));
        let pixels = config.resolution * config.resolution;
        NoiseInput {
            z: gaussian(config.input_channels, pixels, config.z_std, &mut rng),
            eps_std: config.eps_std,
        }
    }

    pub fn z(&self) -> &Array2<f64> {
        &self.z
    }

    /// `z + eps` with a fresh perturbation.
    pub fn perturbed(&self, rng: &mut ChaCha8Rng) -> Array2<f64> {
        if self.eps_std == 0.0 {
            return self.z.clone();
        }
        &self.z + &gaussian(self.z.nrows(), self.z.ncols(), self.eps_std, rng)
    }
}

/// Mean over sites of the squared error summed over channels, and its
/// gradient with respect to the network output.
pub fn site_loss(output: &Array2<f64>, footprints: &[Footprint], values: &[[f64; 3]]) -> (f64, Array2<f64>) {
    let mut grad = Array2::zeros(output.raw_dim());
    let n = footprints.len().max(1) as f64;
    let mut loss = 0.0;
    for (fp, v) in footprints.iter().zip(values) {
        for k in 0..3 {
            let row = output.row(k);
            let pred: f64 = (0..4).map(|t| fp.weights[t] * row[fp.pixels[t]]).sum();
            let r = pred - v[k];
            loss += r * r;
            for t in 0..4 {
                grad[[k, fp.pixels[t]]] += 2.0 * r * fp.weights[t] / n;
            }
        }
    }
    (loss / n, grad)
}

fn to_map(out: &Array2<f64>, resolution: usize, kind: ChannelKind) -> DenseUVMap {
    let values = (0..out.ncols()).map(|p| [out[[0, p]], out[[1, p]], out[[2, p]]]).collect();
    DenseUVMap {
        height: resolution,
        width: resolution,
        values,
        kind,
    }
}

/// Result of one 2D optimization.
#[derive(Debug, Clone)]
pub struct Prior2DOutcome {
    pub map: DenseUVMap,
    /// `(step, mse)` per step.
    pub log: Vec<(usize, f64)>,
    /// Maps from noise-free forwards at the requested steps.
    pub snapshots: Vec<(usize, DenseUVMap)>,
}

/// Fits the network to the samples and returns the final noise-free map.
pub fn optimize_2d_prior(samples: &SparseUVSamples, config: &Prior2DConfig) -> Result<DenseUVMap> {
    Ok(optimize_2d_prior_logged(samples, config, &[])?.map)
}

/// As [`optimize_2d_prior`], keeping the loss log and snapshots taken
/// after the listed (1-based) step counts.
pub fn optimize_2d_prior_logged(
    samples: &SparseUVSamples,
    config: &Prior2DConfig,
    snapshot_steps: &[usize],
) -> Result<Prior2DOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidData("2D prior needs at least one sample".into()));
    }
    if samples.resolution != config.resolution {
        return Err(Error::Parameter(format!(
            "samples are at resolution {} but the network is configured for {}",
            samples.resolution, config.resolution
        )));
    }
    let n = config.resolution;
    let footprints: Vec<Footprint> = samples
        .sites
        .iter()
        .map(|&s| bilinear_footprint(s, n, n).ok_or_else(|| Error::Parameter(format!("site {s:?} is outside the map"))))
        .collect::<Result<_>>()?;
    if samples.values.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("sample values must be finite".into()));
    }
    let mut net = build_2d_network(config, config.seed)?;
    let noise = NoiseInput::new(config, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, TAG_PERTURB, 0));
    let mut adam = Adam::new(config.learning_rate);
    let mut log = Vec::with_capacity(config.steps);
    let mut snapshots = Vec::new();
    for step in 0..config.steps {
        let input = noise.perturbed(&mut rng);
        let (out, cache) = net.forward(&input);
        let (loss, dout) = site_loss(&out, &footprints, &samples.values);
        if !loss.is_finite() {
            return Err(Error::Optimization {
                step,
                reason: "non-finite 2D loss".into(),
            });
        }
        log.push((step, loss));
        net.zero_grad();
        net.backward(&cache, &dout);
        let mut params = net.params_mut();
        if params.iter().any(|p| p.grad.iter().any(|g| !g.is_finite())) {
            return Err(Error::Optimization {
                step,
                reason: "non-finite 2D gradient".into(),
            });
        }
        adam.step(&mut params);
        if snapshot_steps.contains(&(step + 1)) {
            snapshots.push((step + 1, to_map(&net.forward(noise.z()).0, n, samples.kind)));
        }
    }
    let map = to_map(&net.forward(noise.z()).0, n, samples.kind);
    if !map.is_finite() {
        return Err(Error::Optimization {
            step: config.steps,
            reason: "non-finite dense map".into(),
        });
    }
    Ok(Prior2DOutcome { map, log, snapshots })
}

/// Same line format as the 3D prior log: `step mse`.
pub fn format_loss_log(log: &[(usize, f64)]) -> String {
    log.iter().map(|(s, l)| format!("{s} {l:.9e}\n")).collect()
}
