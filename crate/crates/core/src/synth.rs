//! Synthetic multi-channel phantoms with ellipsoidal lesions and decoys.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{connected_components, Connectivity};
use crate::volume::{BinaryMask, Dims, LabelMap, Volume3D, VolumeStack, Voxel};

/// Rejection-sampling budget per generation call.
pub const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub n_lesions: usize,
    /// Base radius range in voxels; each axis is scaled by a ratio in `[0.6, 1.4]`.
    pub radius_min: f64,
    pub radius_max: f64,
    pub lesion_offset: f64,
    /// Offset painted into decoy ellipsoids by [`generate_candidates`].
    pub decoy_offset: f64,
    pub noise_std: f64,
    pub n_channels: usize,
    /// Channel that receives the lesion and decoy offsets.
    pub lesion_channel: usize,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: [32, 32, 32],
            spacing: [1.0; 3],
            n_lesions: 5,
            radius_min: 2.0,
            radius_max: 3.5,
            lesion_offset: 3.0,
            decoy_offset: 2.25,
            noise_std: 1.0,
            n_channels: 1,
            lesion_channel: 0,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.dims.iter().any(|&d| d < 5) {
            bad.push("dims must be at least 5 per axis");
        }
        if !(self.radius_min > 0.0 && self.radius_min <= self.radius_max) {
            bad.push("need 0 < radius_min <= radius_max");
        }
        if !(self.noise_std >= 0.0) || !self.lesion_offset.is_finite() || !self.decoy_offset.is_finite() {
            bad.push("noise_std must be >= 0 and offsets finite");
        }
        if self.n_channels == 0 || self.lesion_channel >= self.n_channels {
            bad.push("lesion_channel must index one of n_channels >= 1 channels");
        }
        if self.spacing.iter().any(|s| !(*s > 0.0)) {
            bad.push("spacing must be positive");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(bad.join("; ")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub spec: PhantomSpec,
    pub stack: VolumeStack,
    pub gt: LabelMap,
}

/// Predictions derived from a phantom, with known per-instance identity.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    /// Labels are the 26-connected components of the prediction mask.
    pub pred: LabelMap,
    /// Phantom channels with the decoys painted in.
    pub stack: VolumeStack,
    /// `true` at index `id - 1` when prediction `id` is a decoy.
    pub is_decoy: Vec<bool>,
}

fn ellipsoid(rng: &mut ChaCha8Rng, dims: Dims, rmin: f64, rmax: f64) -> Option<Vec<Voxel>> {
    let r = if rmax > rmin { rng.random_range(rmin..=rmax) } else { rmin };
    let radii: [f64; 3] = std::array::from_fn(|_| r * rng.random_range(0.6..=1.4));
    let ext: [usize; 3] = std::array::from_fn(|a| radii[a].floor() as usize);
    // keep one voxel of border so a unit jitter stays inside
    let mut c = [0usize; 3];
    for a in 0..3 {
        let lo = ext[a] + 1;
        let hi = dims.0[a].checked_sub(ext[a] + 2)?;
        if lo > hi {
            return None;
        }
        c[a] = rng.random_range(lo..=hi);
    }
    let mut out = Vec::new();
    for z in c[2] - ext[2]..=c[2] + ext[2] {
        for y in c[1] - ext[1]..=c[1] + ext[1] {
            for x in c[0] - ext[0]..=c[0] + ext[0] {
                let d: f64 = [x, y, z].iter().enumerate().map(|(a, &v)| ((v as f64 - c[a] as f64) / radii[a]).powi(2)).sum();
                if d <= 1.0 {
                    out.push([x, y, z]);
                }
            }
        }
    }
    Some(out)
}

/// Marks every voxel within Chebyshev distance `margin` of `voxels`.
fn forbid(grid: &mut [bool], dims: Dims, voxels: &[Voxel], margin: usize) {
    let m = margin as isize;
    for &v in voxels {
        for dz in -m..=m {
            for dy in -m..=m {
                for dx in -m..=m {
                    if let Some(w) = dims.offset(v, [dx, dy, dz]) {
                        grid[dims.index(w)] = true;
                    }
                }
            }
        }
    }
}

/// Places up to `n` ellipsoids avoiding `forbidden`; each placed one is
/// surrounded by a `margin` exclusion zone.
fn place(
    rng: &mut ChaCha8Rng,
    dims: Dims,
    spec: &PhantomSpec,
    n: usize,
    forbidden: &mut [bool],
    margin: usize,
) -> Result<Vec<Vec<Voxel>>> {
    let mut placed = Vec::with_capacity(n);
    let mut attempts = 0;
    while placed.len() < n {
        if attempts == MAX_ATTEMPTS {
            return Err(Error::Capacity { achieved: placed.len(), requested: n });
        }
        attempts += 1;
        let Some(vox) = ellipsoid(rng, dims, spec.radius_min, spec.radius_max) else { continue };
        if vox.iter().any(|v| forbidden[dims.index(*v)]) {
            continue;
        }
        forbid(forbidden, dims, &vox, margin);
        placed.push(vox);
    }
    Ok(placed)
}

/// Gaussian background with ellipsoidal lesions on the lesion channel.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let dims = Dims(spec.dims);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut forbidden = vec![false; dims.len()];
    // gap of 3 keeps unit-jittered predictions of distinct lesions apart
    let lesions = place(&mut rng, dims, spec, spec.n_lesions, &mut forbidden, 3)?;
    let mut labels = vec![0u32; dims.len()];
    for (k, vox) in lesions.iter().enumerate() {
        for v in vox {
            labels[dims.index(*v)] = k as u32 + 1;
        }
    }
    let mut channels = Vec::with_capacity(spec.n_channels);
    for c in 0..spec.n_channels {
        let mut data: Vec<f64> = (0..dims.len()).map(|_| spec.noise_std * rng.sample::<f64, _>(StandardNormal)).collect();
        if c == spec.lesion_channel {
            for (d, l) in data.iter_mut().zip(&labels) {
                if *l > 0 {
                    *d += spec.lesion_offset;
                }
            }
        }
        channels.push(Volume3D::new(dims, spec.spacing, data, format!("channel_{c}"))?);
    }
    Ok(Phantom { spec: spec.clone(), stack: VolumeStack::new(channels)?, gt: LabelMap::new(dims, labels)? })
}

/// Jittered copies of every ground-truth lesion plus `n_fp` decoys.
///
/// Decoys share no voxel with the ground truth and are painted into the
/// lesion channel with `spec.decoy_offset`.
pub fn generate_candidates(phantom: &Phantom, n_fp: usize, seed: u64) -> Result<CandidateSet> {
    let spec = &phantom.spec;
    let dims = phantom.gt.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pred = BinaryMask::empty(dims);
    let mut forbidden = vec![false; dims.len()];
    for label in 1..=phantom.gt.n_labels() {
        let gt_vox: Vec<Voxel> = phantom.gt.mask_of(label).indices().into_iter().map(|i| dims.coords(i)).collect();
        let shift: [isize; 3] = std::array::from_fn(|_| rng.random_range(-1i32..=1) as isize);
        let moved: Option<Vec<Voxel>> = gt_vox.iter().map(|v| dims.offset(*v, shift)).collect();
        let moved = match moved {
            Some(m) if m.iter().any(|v| phantom.gt.get(*v) == label) => m,
            _ => gt_vox.clone(),
        };
        for v in &moved {
            pred.set(*v, true);
        }
        forbid(&mut forbidden, dims, &gt_vox, 2);
        forbid(&mut forbidden, dims, &moved, 1);
    }
    let decoys = place(&mut rng, dims, spec, n_fp, &mut forbidden, 1)?;
    let mut channels = phantom.stack.channels().to_vec();
    let lesion = &channels[spec.lesion_channel];
    let mut data = lesion.data().to_vec();
    for vox in &decoys {
        for v in vox {
            pred.set(*v, true);
            data[dims.index(*v)] += spec.decoy_offset;
        }
    }
    channels[spec.lesion_channel] = Volume3D::new(dims, lesion.spacing(), data, lesion.channel())?;
    let (labels, instances) = connected_components(&pred, Connectivity::Corners26);
    let mut is_decoy = vec![false; instances.len()];
    for vox in &decoys {
        is_decoy[labels.get(vox[0]) as usize - 1] = true;
    }
    Ok(CandidateSet { pred: labels, stack: VolumeStack::new(channels)?, is_decoy })
}
