//! Dense, loop-by-loop forward pass and input gradient of the three-layer scorer.

use salref_core::tinynet::HIDDEN;
use salref_core::{Dims, GradientTarget, TinyNet, VolumeStack, Voxel};

const K: usize = 27;

fn offset(k: usize) -> [i64; 3] {
    [(k % 3) as i64 - 1, ((k / 3) % 3) as i64 - 1, (k / 9) as i64 - 1]
}

fn shifted(dims: Dims, v: [i64; 3], o: [i64; 3]) -> Option<Voxel> {
    let q = [v[0] + o[0], v[1] + o[1], v[2] + o[2]];
    let inside = (0..3).all(|a| q[a] >= 0 && (q[a] as usize) < dims.0[a]);
    inside.then(|| [q[0] as usize, q[1] as usize, q[2] as usize])
}

fn ivox(v: Voxel) -> [i64; 3] {
    [v[0] as i64, v[1] as i64, v[2] as i64]
}

struct Params<'a> {
    c_in: usize,
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: &'a [f64],
    w3: &'a [f64],
    b3: f64,
}

fn split(net: &TinyNet, c_in: usize) -> Params<'_> {
    let p = net.params();
    let (w1, rest) = p.split_at(HIDDEN * c_in * K);
    let (b1, rest) = rest.split_at(HIDDEN);
    let (w2, rest) = rest.split_at(HIDDEN * HIDDEN * K);
    let (b2, rest) = rest.split_at(HIDDEN);
    let (w3, rest) = rest.split_at(HIDDEN);
    Params { c_in, w1, b1, w2, b2, w3, b3: rest[0] }
}

/// Pre-activations of both hidden layers, indexed `[channel][voxel index]`.
fn hidden(p: &Params, x: &VolumeStack) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let dims = x.dims();
    let n = dims.len();
    let mut z1 = vec![vec![0.0; n]; HIDDEN];
    for (co, z) in z1.iter_mut().enumerate() {
        for (i, zi) in z.iter_mut().enumerate() {
            let v = ivox(dims.coords(i));
            let mut s = p.b1[co];
            for ci in 0..p.c_in {
                for k in 0..K {
                    if let Some(q) = shifted(dims, v, offset(k)) {
                        s += p.w1[(co * p.c_in + ci) * K + k] * x.channel(ci).get(q);
                    }
                }
            }
            *zi = s;
        }
    }
    let mut z2 = vec![vec![0.0; n]; HIDDEN];
    for (co, z) in z2.iter_mut().enumerate() {
        for (i, zi) in z.iter_mut().enumerate() {
            let v = ivox(dims.coords(i));
            let mut s = p.b2[co];
            for (ci, z1c) in z1.iter().enumerate() {
                for k in 0..K {
                    if let Some(q) = shifted(dims, v, offset(k)) {
                        s += p.w2[(co * HIDDEN + ci) * K + k] * z1c[dims.index(q)].max(0.0);
                    }
                }
            }
            *zi = s;
        }
    }
    (z1, z2)
}

fn sigmoid(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

/// Probability at every voxel.
pub fn forward(net: &TinyNet, x: &VolumeStack) -> Vec<f64> {
    let p = split(net, x.n_channels());
    let (_, z2) = hidden(&p, x);
    (0..x.dims().len())
        .map(|i| sigmoid(p.b3 + (0..HIDDEN).map(|c| p.w3[c] * z2[c][i].max(0.0)).sum::<f64>()))
        .collect()
}

/// Dense gradient of the target output at `v_out` with respect to input `channel`.
pub fn input_gradient(net: &TinyNet, x: &VolumeStack, v_out: Voxel, channel: usize) -> Vec<f64> {
    let dims = x.dims();
    let n = dims.len();
    let p = split(net, x.n_channels());
    let (z1, z2) = hidden(&p, x);
    let io = dims.index(v_out);
    let s = p.b3 + (0..HIDDEN).map(|c| p.w3[c] * z2[c][io].max(0.0)).sum::<f64>();
    let ds = match net.target {
        GradientTarget::Sigmoid => sigmoid(s) * (1.0 - sigmoid(s)),
        GradientTarget::Logit => 1.0,
    };
    let dz2: Vec<f64> = (0..HIDDEN).map(|c| if z2[c][io] > 0.0 { ds * p.w3[c] } else { 0.0 }).collect();

    let mut dz1 = vec![vec![0.0; n]; HIDDEN];
    for (co, d2) in dz2.iter().enumerate() {
        for k in 0..K {
            let Some(q) = shifted(dims, ivox(v_out), offset(k)) else { continue };
            let qi = dims.index(q);
            for ci in 0..HIDDEN {
                if z1[ci][qi] > 0.0 {
                    dz1[ci][qi] += d2 * p.w2[(co * HIDDEN + ci) * K + k];
                }
            }
        }
    }

    let mut g = vec![0.0; n];
    for (co, d1) in dz1.iter().enumerate() {
        for (qi, d) in d1.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            let q = ivox(dims.coords(qi));
            for k in 0..K {
                if let Some(r) = shifted(dims, q, offset(k)) {
                    g[dims.index(r)] += d * p.w1[(co * p.c_in + channel) * K + k];
                }
            }
        }
    }
    g
}
