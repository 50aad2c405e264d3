//! A small 3D convolutional scorer with exact input gradients.
//!
//! Architecture: `conv3(k=3, C_in -> 8) + ReLU`, `conv3(k=3, 8 -> 8) + ReLU`,
//! `conv3(k=1, 8 -> 1) + sigmoid`, zero padding everywhere. The receptive field
//! of one output voxel is the 5x5x5 cube around it.
//!
//! Any model used by the saliency engine implements [`Scorer`].

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Dims, Volume3D, VolumeStack, Voxel};

/// Hidden channel count of both 3x3x3 layers.
pub const HIDDEN: usize = 8;
const TAPS: usize = 27;
const PARAMS_MAGIC: &[u8; 8] = b"TINYNET\0";
const PARAMS_VERSION: u32 = 1;

/// Gradient of one output voxel restricted to a box; zero outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPatch {
    pub origin: Voxel,
    pub extent: [usize; 3],
    /// x-fastest within the box.
    pub values: Vec<f64>,
}

impl GradientPatch {
    pub fn dense(vol: Volume3D) -> Self {
        GradientPatch { origin: [0; 3], extent: vol.dims().0, values: vol.into_data() }
    }

    /// Visits `(volume linear index, value)` for every voxel in the box.
    pub fn for_each(&self, dims: Dims, mut f: impl FnMut(usize, f64)) {
        let [ex, ey, ez] = self.extent;
        let mut k = 0;
        for z in 0..ez {
            for y in 0..ey {
                let row = dims.index([self.origin[0], self.origin[1] + y, self.origin[2] + z]);
                for x in 0..ex {
                    f(row + x, self.values[k]);
                    k += 1;
                }
            }
        }
    }

    pub fn to_volume(&self, dims: Dims, spacing: [f64; 3]) -> Result<Volume3D> {
        let mut data = vec![0.0; dims.len()];
        self.for_each(dims, |i, v| data[i] = v);
        Volume3D::new(dims, spacing, data, "gradient")
    }
}

/// A differentiable voxel-wise segmentation scorer.
pub trait Scorer: Sync {
    fn in_channels(&self) -> usize;

    /// Per-voxel probability in `[0, 1]`.
    fn forward(&self, input: &VolumeStack) -> Result<Volume3D>;

    /// Gradient of output voxel `v_out` with respect to every voxel of input `channel`.
    fn input_gradient(&self, input: &VolumeStack, v_out: Voxel, channel: usize) -> Result<Volume3D>;

    /// Gradients for several output voxels of the same input, in the same order.
    fn gradient_patches(&self, input: &VolumeStack, outputs: &[Voxel], channel: usize) -> Result<Vec<GradientPatch>> {
        outputs
            .iter()
            .map(|&v| self.input_gradient(input, v, channel).map(GradientPatch::dense))
            .collect()
    }
}

/// Which output scalar input gradients differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GradientTarget {
    #[default]
    Sigmoid,
    Logit,
}

/// Parameters of the fixed three-layer network, stored flat as
/// `[w1 | b1 | w2 | b2 | w3 | b3]` with conv weights laid out `[out][in][tap]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyNet {
    c_in: usize,
    params: Vec<f64>,
    pub target: GradientTarget,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    len: usize,
}

impl Layout {
    fn new(c_in: usize) -> Self {
        let w1 = 0;
        let b1 = w1 + HIDDEN * c_in * TAPS;
        let w2 = b1 + HIDDEN;
        let b2 = w2 + HIDDEN * HIDDEN * TAPS;
        let w3 = b2 + HIDDEN;
        let b3 = w3 + HIDDEN;
        Layout { w1, b1, w2, b2, w3, b3, len: b3 + 1 }
    }
}

/// Tap index of a 3x3x3 kernel offset.
#[inline]
fn tap_offset(k: usize) -> [isize; 3] {
    [(k % 3) as isize - 1, ((k / 3) % 3) as isize - 1, (k / 9) as isize - 1]
}

/// Axis-aligned box of voxels inside the volume.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Region {
    lo: Voxel,
    ext: [usize; 3],
}

impl Region {
    fn full(dims: Dims) -> Self {
        Region { lo: [0; 3], ext: dims.0 }
    }

    fn around(lo: Voxel, hi: Voxel, margin: usize, dims: Dims) -> Self {
        let mut r = Region { lo: [0; 3], ext: [0; 3] };
        for a in 0..3 {
            let l = lo[a].saturating_sub(margin);
            let h = (hi[a] + margin).min(dims.0[a] - 1);
            r.lo[a] = l;
            r.ext[a] = h - l + 1;
        }
        r
    }

    fn len(&self) -> usize {
        self.ext[0] * self.ext[1] * self.ext[2]
    }

    #[inline]
    fn index(&self, v: Voxel) -> usize {
        (v[0] - self.lo[0]) + self.ext[0] * ((v[1] - self.lo[1]) + self.ext[1] * (v[2] - self.lo[2]))
    }

    fn contains(&self, v: Voxel) -> bool {
        (0..3).all(|a| v[a] >= self.lo[a] && v[a] < self.lo[a] + self.ext[a])
    }

    fn copy_from(&self, vol: &Volume3D, out: &mut Vec<f64>) {
        let dims = vol.dims();
        for z in 0..self.ext[2] {
            for y in 0..self.ext[1] {
                let start = dims.index([self.lo[0], self.lo[1] + y, self.lo[2] + z]);
                out.extend_from_slice(&vol.data()[start..start + self.ext[0]]);
            }
        }
    }
}

/// Calls `f(tap, out_start, in_start, run_len)` for every x-run of output voxels
/// `p` in `out` whose neighbor `p + offset(tap)` lies inside the volume.
/// `inp` must cover `out` dilated by one voxel (clipped to the volume).
fn for_each_run(out: &Region, inp: &Region, dims: Dims, mut f: impl FnMut(usize, usize, usize, usize)) {
    for k in 0..TAPS {
        let o = tap_offset(k);
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut empty = false;
        for a in 0..3 {
            let l = (out.lo[a] as isize).max(-o[a]);
            let h = ((out.lo[a] + out.ext[a]) as isize - 1).min(dims.0[a] as isize - 1 - o[a]);
            if l > h {
                empty = true;
                break;
            }
            lo[a] = l as usize;
            hi[a] = h as usize;
        }
        if empty {
            continue;
        }
        let len = hi[0] - lo[0] + 1;
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                let p = [lo[0], y, z];
                let q = [
                    (p[0] as isize + o[0]) as usize,
                    (p[1] as isize + o[1]) as usize,
                    (p[2] as isize + o[2]) as usize,
                ];
                debug_assert!(inp.contains(q));
                f(k, out.index(p), inp.index(q), len);
            }
        }
    }
}

/// 3x3x3 zero-padded correlation of a channel-major field.
#[allow(clippy::too_many_arguments)]
fn conv3(
    input: &[f64],
    c_in: usize,
    in_region: &Region,
    weights: &[f64],
    bias: &[f64],
    c_out: usize,
    out_region: &Region,
    dims: Dims,
) -> Vec<f64> {
    let olen = out_region.len();
    let ilen = in_region.len();
    let mut out = vec![0.0; c_out * olen];
    for co in 0..c_out {
        out[co * olen..(co + 1) * olen].fill(bias[co]);
    }
    for_each_run(out_region, in_region, dims, |k, os, is, len| {
        for co in 0..c_out {
            let o = &mut out[co * olen + os..co * olen + os + len];
            for ci in 0..c_in {
                let w = weights[(co * c_in + ci) * TAPS + k];
                let i = &input[ci * ilen + is..ci * ilen + is + len];
                for (ov, iv) in o.iter_mut().zip(i) {
                    *ov += w * iv;
                }
            }
        }
    });
    out
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.max(0.0)).collect()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Intermediate activations of a full-volume forward pass.
struct Activations {
    z1: Vec<f64>,
    h1: Vec<f64>,
    z2: Vec<f64>,
    h2: Vec<f64>,
    y: Vec<f64>,
}

/// Per-epoch training diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss over the dataset, evaluated before each sample's update.
    pub epoch_losses: Vec<f64>,
}

/// Optimizer settings for [`TinyNet::train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 60, lr: 1e-2, seed: 0 }
    }
}

/// Architecture description written next to the binary parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyNetMeta {
    pub format_version: u32,
    pub architecture: String,
    pub in_channels: usize,
    pub hidden_channels: usize,
    pub param_count: usize,
    pub gradient_target: GradientTarget,
    pub seed: u64,
}

impl TinyNet {
    /// Seeded uniform initialization in `[-a, a]`, `a = sqrt(1 / fan_in)`.
    pub fn new(c_in: usize, seed: u64) -> Result<Self> {
        if c_in == 0 {
            return Err(Error::validation("scorer needs at least one input channel"));
        }
        let l = Layout::new(c_in);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; l.len];
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, params: &mut [f64]| {
            let a = (1.0 / fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = rng.random_range(-a..=a);
            }
        };
        fill(l.w1..l.w2, c_in * TAPS, &mut params);
        fill(l.w2..l.w3, HIDDEN * TAPS, &mut params);
        fill(l.w3..l.len, HIDDEN, &mut params);
        Ok(TinyNet { c_in, params, target: GradientTarget::Sigmoid, seed })
    }

    /// Builds a network from an explicit flat parameter vector.
    pub fn from_params(c_in: usize, params: Vec<f64>) -> Result<Self> {
        let l = Layout::new(c_in);
        if params.len() != l.len {
            return Err(Error::validation(format!(
                "expected {} parameters for {c_in} input channels, got {}",
                l.len,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::validation("non-finite scorer parameter"));
        }
        Ok(TinyNet { c_in, params, target: GradientTarget::Sigmoid, seed: 0 })
    }

    pub fn zeros(c_in: usize) -> Self {
        TinyNet { c_in, params: vec![0.0; Layout::new(c_in).len], target: GradientTarget::Sigmoid, seed: 0 }
    }

    pub fn param_count(c_in: usize) -> usize {
        Layout::new(c_in).len
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    fn layout(&self) -> Layout {
        Layout::new(self.c_in)
    }

    /// First-layer weight `[out][in][tap]`.
    pub fn w1_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        &mut self.params[l.w1..l.b1]
    }

    pub fn b1_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        &mut self.params[l.b1..l.w2]
    }

    pub fn w2_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        &mut self.params[l.w2..l.b2]
    }

    pub fn b2_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        &mut self.params[l.b2..l.w3]
    }

    pub fn w3_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        &mut self.params[l.w3..l.b3]
    }

    pub fn b3_mut(&mut self) -> &mut f64 {
        let l = self.layout();
        &mut self.params[l.b3]
    }

    /// Flat tap index for kernel offset `[dx, dy, dz]`, each in `-1..=1`.
    pub fn tap(offset: [isize; 3]) -> usize {
        ((offset[0] + 1) + 3 * (offset[1] + 1) + 9 * (offset[2] + 1)) as usize
    }

    fn check_input(&self, input: &VolumeStack) -> Result<()> {
        if input.n_channels() != self.c_in {
            return Err(Error::validation(format!(
                "scorer expects {} input channels, got {}",
                self.c_in,
                input.n_channels()
            )));
        }
        input.dims().ensure_non_empty()
    }

    fn activations(&self, input: &VolumeStack) -> Activations {
        let l = self.layout();
        let dims = input.dims();
        let full = Region::full(dims);
        let mut x = Vec::with_capacity(self.c_in * dims.len());
        for c in input.channels() {
            x.extend_from_slice(c.data());
        }
        let p = &self.params;
        let z1 = conv3(&x, self.c_in, &full, &p[l.w1..l.b1], &p[l.b1..l.w2], HIDDEN, &full, dims);
        let h1 = relu(&z1);
        let z2 = conv3(&h1, HIDDEN, &full, &p[l.w2..l.b2], &p[l.b2..l.w3], HIDDEN, &full, dims);
        let h2 = relu(&z2);
        let n = dims.len();
        let mut y = vec![p[l.b3]; n];
        for c in 0..HIDDEN {
            let w = p[l.w3 + c];
            for (yv, hv) in y.iter_mut().zip(&h2[c * n..(c + 1) * n]) {
                *yv += w * hv;
            }
        }
        for v in &mut y {
            *v = sigmoid(*v);
        }
        Activations { z1, h1, z2, h2, y }
    }

    /// Exact input gradients for a set of output voxels, computed on the local
    /// box that covers their receptive fields.
    fn local_gradients(&self, input: &VolumeStack, outputs: &[Voxel], channel: usize) -> Result<Vec<GradientPatch>> {
        self.check_input(input)?;
        if channel >= self.c_in {
            return Err(Error::validation(format!("gradient channel {channel} out of range")));
        }
        let dims = input.dims();
        if let Some(v) = outputs.iter().find(|v| !dims.contains(**v)) {
            return Err(Error::validation(format!("output voxel {v:?} outside dims {:?}", dims.0)));
        }
        if outputs.is_empty() {
            return Ok(Vec::new());
        }
        let mut lo = outputs[0];
        let mut hi = outputs[0];
        for v in outputs {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        let l = self.layout();
        let p = &self.params;
        let r2 = Region::around(lo, hi, 0, dims);
        let r1 = Region::around(lo, hi, 1, dims);
        let r0 = Region::around(lo, hi, 2, dims);
        let mut x = Vec::with_capacity(self.c_in * r0.len());
        for c in input.channels() {
            r0.copy_from(c, &mut x);
        }
        let z1 = conv3(&x, self.c_in, &r0, &p[l.w1..l.b1], &p[l.b1..l.w2], HIDDEN, &r1, dims);
        let h1 = relu(&z1);
        let z2 = conv3(&h1, HIDDEN, &r1, &p[l.w2..l.b2], &p[l.b2..l.w3], HIDDEN, &r2, dims);
        let (n1, n2) = (r1.len(), r2.len());
        let w1 = &p[l.w1..l.b1];
        let w2 = &p[l.w2..l.b2];
        let w3 = &p[l.w3..l.b3];

        let mut patches = Vec::with_capacity(outputs.len());
        for &v in outputs {
            let i2 = r2.index(v);
            let mut z3 = p[l.b3];
            for c in 0..HIDDEN {
                z3 += w3[c] * z2[c * n2 + i2].max(0.0);
            }
            let dz3 = match self.target {
                GradientTarget::Sigmoid => {
                    let y = sigmoid(z3);
                    y * (1.0 - y)
                }
                GradientTarget::Logit => 1.0,
            };
            let mut dz2 = [0.0; HIDDEN];
            for c in 0..HIDDEN {
                if z2[c * n2 + i2] > 0.0 {
                    dz2[c] = w3[c] * dz3;
                }
            }
            let patch_region = Region::around(v, v, 2, dims);
            let mut values = vec![0.0; patch_region.len()];
            for k in 0..TAPS {
                let Some(u) = dims.offset(v, tap_offset(k)) else { continue };
                let i1 = r1.index(u);
                let mut dz1 = [0.0; HIDDEN];
                let mut any = false;
                for c1 in 0..HIDDEN {
                    if z1[c1 * n1 + i1] > 0.0 {
                        let mut s = 0.0;
                        for c2 in 0..HIDDEN {
                            s += w2[(c2 * HIDDEN + c1) * TAPS + k] * dz2[c2];
                        }
                        dz1[c1] = s;
                        any |= s != 0.0;
                    }
                }
                if !any {
                    continue;
                }
                for k2 in 0..TAPS {
                    let Some(q) = dims.offset(u, tap_offset(k2)) else { continue };
                    let mut g = 0.0;
                    for c1 in 0..HIDDEN {
                        g += w1[(c1 * self.c_in + channel) * TAPS + k2] * dz1[c1];
                    }
                    values[patch_region.index(q)] += g;
                }
            }
            patches.push(GradientPatch { origin: patch_region.lo, extent: patch_region.ext, values });
        }
        Ok(patches)
    }

    /// Voxel-wise BCE (mean) plus soft-Dice loss, and its parameter gradient.
    fn loss_and_grad(&self, input: &VolumeStack, target: &BinaryMask) -> (f64, Vec<f64>) {
        let l = self.layout();
        let dims = input.dims();
        let n = dims.len();
        let full = Region::full(dims);
        let act = self.activations(input);
        let p = &self.params;
        let g: Vec<f64> = target.bits().iter().map(|b| *b as u8 as f64).collect();

        const EPS_LOG: f64 = 1e-12;
        const SMOOTH: f64 = 1.0;
        let mut bce = 0.0;
        let (mut inter, mut sum_y, mut sum_g) = (0.0, 0.0, 0.0);
        for (y, t) in act.y.iter().zip(&g) {
            bce -= t * (y + EPS_LOG).ln() + (1.0 - t) * (1.0 - y + EPS_LOG).ln();
            inter += y * t;
            sum_y += y;
            sum_g += t;
        }
        bce /= n as f64;
        let denom = sum_y + sum_g + SMOOTH;
        let dice = (2.0 * inter + SMOOTH) / denom;
        let loss = bce + (1.0 - dice);

        // d loss / d z3
        let mut dz3 = vec![0.0; n];
        for i in 0..n {
            let y = act.y[i];
            let d_dice_dy = (2.0 * g[i] * denom - (2.0 * inter + SMOOTH)) / (denom * denom);
            dz3[i] = (y - g[i]) / n as f64 - d_dice_dy * y * (1.0 - y);
        }

        let mut grad = vec![0.0; l.len];
        grad[l.b3] = dz3.iter().sum();
        let mut dz2 = vec![0.0; HIDDEN * n];
        for c in 0..HIDDEN {
            let h2 = &act.h2[c * n..(c + 1) * n];
            grad[l.w3 + c] = dz3.iter().zip(h2).map(|(d, h)| d * h).sum();
            let w = p[l.w3 + c];
            for i in 0..n {
                if act.z2[c * n + i] > 0.0 {
                    dz2[c * n + i] = w * dz3[i];
                }
            }
            grad[l.b2 + c] = dz2[c * n..(c + 1) * n].iter().sum();
        }

        let mut dh1 = vec![0.0; HIDDEN * n];
        {
            let (gw2, _) = grad[l.w2..].split_at_mut(HIDDEN * HIDDEN * TAPS);
            let w2 = &p[l.w2..l.b2];
            for_each_run(&full, &full, dims, |k, os, is, len| {
                for co in 0..HIDDEN {
                    let d = &dz2[co * n + os..co * n + os + len];
                    for ci in 0..HIDDEN {
                        let h = &act.h1[ci * n + is..ci * n + is + len];
                        gw2[(co * HIDDEN + ci) * TAPS + k] += d.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
                        let w = w2[(co * HIDDEN + ci) * TAPS + k];
                        let dh = &mut dh1[ci * n + is..ci * n + is + len];
                        for (t, dv) in dh.iter_mut().zip(d) {
                            *t += w * dv;
                        }
                    }
                }
            });
        }
        for (d, z) in dh1.iter_mut().zip(&act.z1) {
            if *z <= 0.0 {
                *d = 0.0;
            }
        }
        let dz1 = dh1;
        for c in 0..HIDDEN {
            grad[l.b1 + c] = dz1[c * n..(c + 1) * n].iter().sum();
        }
        let mut x = Vec::with_capacity(self.c_in * n);
        for c in input.channels() {
            x.extend_from_slice(c.data());
        }
        {
            let gw1 = &mut grad[l.w1..l.b1];
            let c_in = self.c_in;
            for_each_run(&full, &full, dims, |k, os, is, len| {
                for co in 0..HIDDEN {
                    let d = &dz1[co * n + os..co * n + os + len];
                    for ci in 0..c_in {
                        let xi = &x[ci * n + is..ci * n + is + len];
                        gw1[(co * c_in + ci) * TAPS + k] += d.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            });
        }
        (loss, grad)
    }

    /// Loss of the current parameters on one sample.
    pub fn loss(&self, input: &VolumeStack, target: &BinaryMask) -> Result<f64> {
        self.check_input(input)?;
        target.dims().ensure_same(&input.dims(), "training target")?;
        Ok(self.loss_and_grad(input, target).0)
    }

    /// Trains with Adam, one update per sample, visiting samples in a seeded
    /// shuffled order each epoch. Deterministic for a given seed.
    pub fn train(&mut self, dataset: &[(VolumeStack, BinaryMask)], cfg: &TrainConfig) -> Result<TrainReport> {
        if dataset.is_empty() {
            return Err(Error::validation("training dataset is empty"));
        }
        for (x, m) in dataset {
            self.check_input(x)?;
            m.dims().ensure_same(&x.dims(), "training target")?;
        }
        const BETA1: f64 = 0.9;
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut m = vec![0.0; self.params.len()];
        let mut v = vec![0.0; self.params.len()];
        let mut step = 0i32;
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        let mut epoch_losses = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for &i in &order {
                let (loss, grad) = self.loss_and_grad(&dataset[i].0, &dataset[i].1);
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Divergence { epoch });
                }
                total += loss;
                step += 1;
                let c1 = 1.0 - BETA1.powi(step);
                let c2 = 1.0 - BETA2.powi(step);
                for j in 0..self.params.len() {
                    m[j] = BETA1 * m[j] + (1.0 - BETA1) * grad[j];
                    v[j] = BETA2 * v[j] + (1.0 - BETA2) * grad[j] * grad[j];
                    self.params[j] -= cfg.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + EPS);
                }
            }
            let mean = total / dataset.len() as f64;
            log::debug!("tinynet epoch {epoch}: loss {mean:.6}");
            epoch_losses.push(mean);
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch: cfg.epochs.saturating_sub(1) });
        }
        Ok(TrainReport { epoch_losses })
    }

    pub fn meta(&self) -> TinyNetMeta {
        TinyNetMeta {
            format_version: PARAMS_VERSION,
            architecture: "conv3x3x3(C_in->8)+relu, conv3x3x3(8->8)+relu, conv1x1x1(8->1)+sigmoid; zero padding".into(),
            in_channels: self.c_in,
            hidden_channels: HIDDEN,
            param_count: self.params.len(),
            gradient_target: self.target,
            seed: self.seed,
        }
    }

    /// Binary parameter file: magic, version, `c_in`, hidden width, parameter
    /// count, then little-endian f64 payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(28 + 8 * self.params.len());
        b.extend_from_slice(PARAMS_MAGIC);
        b.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
        b.extend_from_slice(&(self.c_in as u32).to_le_bytes());
        b.extend_from_slice(&(HIDDEN as u32).to_le_bytes());
        b.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            b.extend_from_slice(&p.to_le_bytes());
        }
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() < 28 || &b[0..8] != PARAMS_MAGIC {
            return Err(Error::Format("not a tinynet parameter file".into()));
        }
        let u32_at = |at: usize| u32::from_le_bytes(b[at..at + 4].try_into().unwrap());
        let version = u32_at(8);
        if version != PARAMS_VERSION {
            return Err(Error::Unsupported(format!("tinynet parameter format version {version}")));
        }
        let c_in = u32_at(12) as usize;
        let hidden = u32_at(16) as usize;
        if hidden != HIDDEN {
            return Err(Error::Unsupported(format!("hidden width {hidden}, expected {HIDDEN}")));
        }
        let count = u64::from_le_bytes(b[20..28].try_into().unwrap()) as usize;
        if b.len() != 28 + 8 * count {
            return Err(Error::Format("tinynet parameter payload length mismatch".into()));
        }
        let params = b[28..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        TinyNet::from_params(c_in, params)
    }

    /// Writes `<path>` (binary) and `<path>.json` (architecture sidecar).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))?;
        let side = sidecar_path(path);
        let json = serde_json::to_string_pretty(&self.meta()).map_err(|e| Error::Json { path: side.clone(), source: e })?;
        fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut net = TinyNet::from_bytes(&bytes)?;
        let side = sidecar_path(path);
        if let Ok(text) = fs::read_to_string(&side) {
            let meta: TinyNetMeta = serde_json::from_str(&text).map_err(|e| Error::Json { path: side, source: e })?;
            net.target = meta.gradient_target;
            net.seed = meta.seed;
        }
        Ok(net)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

impl Scorer for TinyNet {
    fn in_channels(&self) -> usize {
        self.c_in
    }

    fn forward(&self, input: &VolumeStack) -> Result<Volume3D> {
        self.check_input(input)?;
        let act = self.activations(input);
        Volume3D::new(input.dims(), input.spacing(), act.y, "probability")
    }

    fn input_gradient(&self, input: &VolumeStack, v_out: Voxel, channel: usize) -> Result<Volume3D> {
        let patch = self.local_gradients(input, &[v_out], channel)?.remove(0);
        patch.to_volume(input.dims(), input.spacing())
    }

    fn gradient_patches(&self, input: &VolumeStack, outputs: &[Voxel], channel: usize) -> Result<Vec<GradientPatch>> {
        self.local_gradients(input, outputs, channel)
    }
}

/// Soft Dice between a probability map and a binary target.
pub fn soft_dice(prob: &Volume3D, target: &BinaryMask) -> f64 {
    let (mut inter, mut s) = (0.0, 0.0);
    for (p, t) in prob.data().iter().zip(target.bits()) {
        let t = *t as u8 as f64;
        inter += p * t;
        s += p + t;
    }
    if s == 0.0 {
        1.0
    } else {
        2.0 * inter / s
    }
}
