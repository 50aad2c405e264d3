//! Neighbouring gray-tone difference matrix features.
//!
//! Each ROI voxel is compared with the mean level of its 26-neighbors that lie
//! in the ROI; voxels without such neighbors are left out. Conventions for
//! degenerate sums: Coarseness = 1e6, Busyness/Strength/Contrast = 0.

use super::discretize::DiscretizedRoi;
use crate::error::{Error, Result};
use crate::instances::Connectivity;

pub const NAMES: [&str; 5] = ["Busyness", "Coarseness", "Complexity", "Contrast", "Strength"];

/// Per level: `(n_i, s_i)`.
pub fn ngtdm_table(disc: &DiscretizedRoi) -> Vec<(u64, f64)> {
    let dims = disc.dims();
    let levels = disc.levels();
    let offsets = Connectivity::Corners26.offsets();
    let mut table = vec![(0u64, 0.0f64); disc.n_levels() as usize];
    for i in disc.roi().indices() {
        let v = dims.coords(i);
        let (mut sum, mut count) = (0.0, 0usize);
        for o in &offsets {
            if let Some(n) = dims.offset(v, *o) {
                let l = levels[dims.index(n)];
                if l > 0 {
                    sum += l as f64;
                    count += 1;
                }
            }
        }
        if count == 0 {
            continue;
        }
        let level = levels[i] as usize;
        table[level - 1].0 += 1;
        table[level - 1].1 += (level as f64 - sum / count as f64).abs();
    }
    table
}

pub fn ngtdm_features(disc: &DiscretizedRoi, lesion: u32) -> Result<[f64; 5]> {
    let table = ngtdm_table(disc);
    let nvp: u64 = table.iter().map(|t| t.0).sum();
    if nvp == 0 {
        return Err(Error::FeatureUndefined { lesion, reason: "NGTDM: no ROI voxel has an ROI neighbor".into() });
    }
    let nvp = nvp as f64;
    // (level, p_i, s_i) for levels with p_i > 0
    let rows: Vec<(f64, f64, f64)> = table
        .iter()
        .enumerate()
        .filter(|(_, t)| t.0 > 0)
        .map(|(k, t)| ((k + 1) as f64, t.0 as f64 / nvp, t.1))
        .collect();
    let ngp = rows.len() as f64;
    let sum_ps: f64 = rows.iter().map(|r| r.1 * r.2).sum();
    let sum_s: f64 = rows.iter().map(|r| r.2).sum();

    let coarseness = if sum_ps == 0.0 { 1e6 } else { 1.0 / sum_ps };
    let (mut contrast_pairs, mut busy_den, mut complexity, mut strength_num) = (0.0, 0.0, 0.0, 0.0);
    for &(i, pi, si) in &rows {
        for &(j, pj, sj) in &rows {
            let d = i - j;
            contrast_pairs += pi * pj * d * d;
            busy_den += (i * pi - j * pj).abs();
            complexity += d.abs() * (pi * si + pj * sj) / (pi + pj);
            strength_num += (pi + pj) * d * d;
        }
    }
    let contrast = if ngp > 1.0 { contrast_pairs / (ngp * (ngp - 1.0)) * sum_s / nvp } else { 0.0 };
    let busyness = if busy_den == 0.0 { 0.0 } else { sum_ps / busy_den };
    let strength = if sum_s == 0.0 { 0.0 } else { strength_num / sum_s };
    Ok([busyness, coarseness, complexity / nvp, contrast, strength])
}
