//! Seeded random inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use salref_core::{BinaryMask, Dims, Volume3D, VolumeStack};

use super::radiomics::Roi;

/// A random map with a random ROI of at most 6 voxels per axis.
pub fn random_roi(seed: u64) -> (Volume3D, BinaryMask, f64, Roi) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let dims = Dims::new(rng.random_range(2..=6), rng.random_range(1..=6), rng.random_range(1..=6));
        let density: f64 = rng.random_range(0.35..=1.0);
        let bits: Vec<bool> = (0..dims.len()).map(|_| rng.random_bool(density)).collect();
        let scale = [1.0, 10.0, 40.0][rng.random_range(0..3)];
        let data: Vec<f64> = (0..dims.len()).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
        let bin_width = [10.0, 2.5, 7.0][rng.random_range(0..3)];
        let spacing = [rng.random_range(0.5..2.0), 1.0, rng.random_range(0.5..2.0)];
        // the oracle and the library both reject ROIs without any neighboring pair
        let has_pair = (0..dims.len()).any(|i| {
            bits[i] && {
                let [x, y, z] = dims.coords(i);
                (0..dims.len()).any(|j| {
                    let [a, b, c] = dims.coords(j);
                    j != i && bits[j] && x.abs_diff(a) <= 1 && y.abs_diff(b) <= 1 && z.abs_diff(c) <= 1
                })
            }
        });
        if !has_pair {
            continue;
        }
        let voxels = (0..dims.len())
            .filter(|&i| bits[i])
            .map(|i| {
                let [x, y, z] = dims.coords(i);
                ([x as i64, y as i64, z as i64], data[i])
            })
            .collect();
        let vol = Volume3D::new(dims, spacing, data, "map").unwrap();
        let roi = Roi { voxels, bin_width, voxel_volume: spacing.iter().product() };
        return (vol, BinaryMask::new(dims, bits).unwrap(), bin_width, roi);
    }
}

/// A stack of `c` channels with uniform values in `[-1, 1)`.
pub fn random_stack(dims: Dims, c: usize, seed: u64) -> VolumeStack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    VolumeStack::new(
        (0..c)
            .map(|k| {
                let data = (0..dims.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                Volume3D::new(dims, [1.0; 3], data, format!("c{k}")).unwrap()
            })
            .collect(),
    )
    .unwrap()
}
