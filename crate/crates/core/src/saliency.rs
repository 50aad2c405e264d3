//! Instance-level SmoothGrad.
//!
//! For one lesion domain `Ω` and `N` noisy replicas `x_n` of the input, the map is
//!
//! ```text
//! M[v] = 1/N Σ_n D^n_{v*}[v],   v* = argmax_{v' ∈ Ω} |D^n_{v'}[v]|,   D^n_{v'}[v] = ∂y(x_n)[v'] / ∂x_n[v]
//! ```
//!
//! The signed-max reduction over `Ω` happens per replica, before averaging.
//! Ties in `|D|` keep the output voxel that comes first in x-fastest scan order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::LesionInstance;
use crate::tinynet::{GradientPatch, Scorer};
use crate::volume::{Dims, Volume3D, VolumeStack};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaliencyConfig {
    pub n_samples: usize,
    pub noise_sigma: f64,
    /// Input channel the gradients are taken with respect to.
    pub channel: usize,
    pub seed: u64,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        SaliencyConfig { n_samples: 50, noise_sigma: 0.05, channel: 0, seed: 0 }
    }
}

impl SaliencyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::validation("saliency n_samples must be at least 1"));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::validation("saliency noise_sigma must be a finite non-negative number"));
        }
        Ok(())
    }

    /// Seed used for a lesion inside a batch: `seed XOR lesion_id`.
    pub fn lesion_seed(&self, lesion_id: u32) -> u64 {
        self.seed ^ lesion_id as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub map: Volume3D,
    pub lesion_id: u32,
    pub config: SaliencyConfig,
}

/// Adds i.i.d. Gaussian noise to every voxel of every channel.
///
/// Draw order is channel-major, x-fastest within a channel.
pub fn noisy_replica(input: &VolumeStack, sigma: f64, rng: &mut ChaCha8Rng) -> Result<VolumeStack> {
    let channels = input
        .channels()
        .iter()
        .map(|c| {
            let data = c
                .data()
                .iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(rng);
                    v + sigma * z
                })
                .collect();
            Volume3D::new(c.dims(), c.spacing(), data, c.channel())
        })
        .collect::<Result<Vec<_>>>()?;
    VolumeStack::new(channels)
}

/// Keeps, at each voxel, the signed value of largest magnitude across patches.
/// Earlier patches win ties; voxels outside every patch are 0.
pub fn reduce_signed_max(patches: &[GradientPatch], dims: Dims) -> Vec<f64> {
    let mut best = vec![0.0f64; dims.len()];
    for p in patches {
        p.for_each(dims, |i, v| {
            if v.abs() > best[i].abs() {
                best[i] = v;
            }
        });
    }
    best
}

/// Saliency map of one lesion.
pub fn instance_saliency(
    scorer: &dyn Scorer,
    input: &VolumeStack,
    omega: &LesionInstance,
    cfg: &SaliencyConfig,
) -> Result<SaliencyMap> {
    cfg.validate()?;
    if omega.voxels.is_empty() {
        return Err(Error::validation(format!("lesion {} has an empty domain", omega.id)));
    }
    let dims = input.dims();
    if let Some(v) = omega.voxels.iter().find(|v| !dims.contains(**v)) {
        return Err(Error::validation(format!("lesion {} voxel {v:?} outside dims {:?}", omega.id, dims.0)));
    }
    if cfg.channel >= input.n_channels() {
        return Err(Error::validation(format!("saliency channel {} out of range", cfg.channel)));
    }
    let mut outputs = omega.voxels.clone();
    outputs.sort_by_key(|v| dims.index(*v));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Without noise every replica is identical; one pass is exact.
    let replicas = if cfg.noise_sigma == 0.0 { 1 } else { cfg.n_samples };
    let mut sum = vec![0.0; dims.len()];
    for _ in 0..replicas {
        let noisy;
        let x = if cfg.noise_sigma == 0.0 {
            input
        } else {
            noisy = noisy_replica(input, cfg.noise_sigma, &mut rng)?;
            &noisy
        };
        let patches = scorer.gradient_patches(x, &outputs, cfg.channel)?;
        let reduced = reduce_signed_max(&patches, dims);
        for (s, r) in sum.iter_mut().zip(&reduced) {
            *s += r;
        }
    }
    if replicas > 1 {
        let n = replicas as f64;
        for s in &mut sum {
            *s /= n;
        }
    }
    Ok(SaliencyMap {
        map: Volume3D::new(dims, input.spacing(), sum, "saliency")?,
        lesion_id: omega.id,
        config: cfg.clone(),
    })
}

/// Saliency maps for many lesions of one input, in input order.
///
/// Each lesion uses [`SaliencyConfig::lesion_seed`], so results do not depend on
/// ordering or scheduling. Individual failures are returned in place; the call
/// only fails when every lesion fails.
pub fn saliency_batch(
    scorer: &dyn Scorer,
    input: &VolumeStack,
    instances: &[LesionInstance],
    cfg: &SaliencyConfig,
) -> Result<Vec<Result<SaliencyMap>>> {
    if instances.is_empty() {
        return Err(Error::validation("saliency batch has no lesions"));
    }
    cfg.validate()?;
    let results: Vec<Result<SaliencyMap>> = instances
        .par_iter()
        .map(|inst| {
            let lesion_cfg = SaliencyConfig { seed: cfg.lesion_seed(inst.id), ..cfg.clone() };
            instance_saliency(scorer, input, inst, &lesion_cfg)
        })
        .collect();
    if results.iter().all(|r| r.is_err()) {
        let first = results.into_iter().next().unwrap().unwrap_err();
        return Err(Error::validation(format!("saliency failed for every lesion; first error: {first}")));
    }
    Ok(results)
}
