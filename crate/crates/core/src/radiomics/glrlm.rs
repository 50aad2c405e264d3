//! Gray-level run-length matrix features, averaged over the 13 directions.

use super::discretize::DiscretizedRoi;
use super::sizemat::SizeMatrix;
use super::DIRECTIONS_13;

pub const NAMES: [&str; 16] = [
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "GrayLevelVariance",
    "HighGrayLevelRunEmphasis",
    "LongRunEmphasis",
    "LongRunHighGrayLevelEmphasis",
    "LongRunLowGrayLevelEmphasis",
    "LowGrayLevelRunEmphasis",
    "RunEntropy",
    "RunLengthNonUniformity",
    "RunLengthNonUniformityNormalized",
    "RunPercentage",
    "RunVariance",
    "ShortRunEmphasis",
    "ShortRunHighGrayLevelEmphasis",
    "ShortRunLowGrayLevelEmphasis",
];

/// Run-length matrix for each of the 13 directions.
///
/// A run is a maximal chain of ROI voxels with equal level along the
/// direction; it starts where the previous voxel is outside the volume,
/// outside the ROI, or has another level.
pub fn glrlm_matrices(disc: &DiscretizedRoi) -> Vec<SizeMatrix> {
    let dims = disc.dims();
    let levels = disc.levels();
    let idx = disc.roi().indices();
    DIRECTIONS_13
        .iter()
        .map(|&dir| {
            let back = [-dir[0], -dir[1], -dir[2]];
            let mut runs = Vec::new();
            for &i in &idx {
                let level = levels[i];
                let v = dims.coords(i);
                let continues = dims.offset(v, back).is_some_and(|p| levels[dims.index(p)] == level);
                if continues {
                    continue;
                }
                let mut len = 1;
                let mut cur = v;
                while let Some(n) = dims.offset(cur, dir) {
                    if levels[dims.index(n)] != level {
                        break;
                    }
                    len += 1;
                    cur = n;
                }
                runs.push((level, len));
            }
            SizeMatrix::new(disc.n_levels() as usize, runs)
        })
        .collect()
}

pub fn glrlm_features(disc: &DiscretizedRoi) -> [f64; 16] {
    let n_voxels = disc.roi().count() as f64;
    let mats = glrlm_matrices(disc);
    let mut out = [0.0; 16];
    for m in &mats {
        let s = m.stats();
        let f = [
            s.gray_nonuniformity,
            s.gray_nonuniformity_norm,
            s.gray_variance,
            s.high_gray_emphasis,
            s.large_emphasis,
            s.large_high_gray,
            s.large_low_gray,
            s.low_gray_emphasis,
            s.entropy,
            s.size_nonuniformity,
            s.size_nonuniformity_norm,
            s.total / n_voxels,
            s.size_variance,
            s.small_emphasis,
            s.small_high_gray,
            s.small_low_gray,
        ];
        for (o, v) in out.iter_mut().zip(f) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= mats.len() as f64;
    }
    out
}
