//! SmoothGrad computed by materializing every gradient volume.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use salref_core::{TinyNet, Volume3D, VolumeStack, Voxel};

fn perturb(x: &VolumeStack, sigma: f64, rng: &mut ChaCha8Rng) -> VolumeStack {
    let channels = x
        .channels()
        .iter()
        .map(|c| {
            let data: Vec<f64> = c
                .data()
                .iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(rng);
                    v + sigma * z
                })
                .collect();
            Volume3D::new(c.dims(), c.spacing(), data, c.channel()).unwrap()
        })
        .collect();
    VolumeStack::new(channels).unwrap()
}

/// Naive map: for each replica, one dense gradient volume per lesion voxel,
/// then the signed value of largest magnitude per input voxel, averaged over replicas.
pub fn instance_saliency(
    net: &TinyNet,
    x: &VolumeStack,
    omega: &[Voxel],
    n_samples: usize,
    sigma: f64,
    channel: usize,
    seed: u64,
) -> Vec<f64> {
    let dims = x.dims();
    let mut omega = omega.to_vec();
    omega.sort_by_key(|v| dims.index(*v));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let replicas: Vec<VolumeStack> = if sigma == 0.0 {
        vec![x.clone()]
    } else {
        (0..n_samples).map(|_| perturb(x, sigma, &mut rng)).collect()
    };
    let volumes: Vec<Vec<Vec<f64>>> = replicas
        .iter()
        .map(|r| omega.iter().map(|&v| super::net::input_gradient(net, r, v, channel)).collect())
        .collect();
    let mut out = vec![0.0; dims.len()];
    for per_replica in &volumes {
        for (i, o) in out.iter_mut().enumerate() {
            let mut best = 0.0f64;
            for g in per_replica {
                if g[i].abs() > best.abs() {
                    best = g[i];
                }
            }
            *o += best;
        }
    }
    let n = volumes.len() as f64;
    out.iter().map(|v| v / n).collect()
}
