//! Gray-level dependence matrix features.
//!
//! The dependence of a voxel is `1 +` the number of 26-neighbors inside the ROI
//! whose level equals its own (alpha = 0), so column `j` counts the voxel itself.

use super::discretize::DiscretizedRoi;
use super::sizemat::SizeMatrix;
use crate::instances::Connectivity;

pub const NAMES: [&str; 14] = [
    "DependenceEntropy",
    "DependenceNonUniformity",
    "DependenceNonUniformityNormalized",
    "DependenceVariance",
    "GrayLevelNonUniformity",
    "GrayLevelVariance",
    "HighGrayLevelEmphasis",
    "LargeDependenceEmphasis",
    "LargeDependenceHighGrayLevelEmphasis",
    "LargeDependenceLowGrayLevelEmphasis",
    "LowGrayLevelEmphasis",
    "SmallDependenceEmphasis",
    "SmallDependenceHighGrayLevelEmphasis",
    "SmallDependenceLowGrayLevelEmphasis",
];

pub fn gldm_matrix(disc: &DiscretizedRoi) -> SizeMatrix {
    let dims = disc.dims();
    let levels = disc.levels();
    let offsets = Connectivity::Corners26.offsets();
    let entries = disc.roi().indices().into_iter().map(|i| {
        let v = dims.coords(i);
        let dependent = offsets
            .iter()
            .filter_map(|o| dims.offset(v, *o))
            .filter(|n| levels[dims.index(*n)] == levels[i])
            .count();
        (levels[i], dependent + 1)
    });
    SizeMatrix::new(disc.n_levels() as usize, entries)
}

pub fn gldm_features(disc: &DiscretizedRoi) -> [f64; 14] {
    let s = gldm_matrix(disc).stats();
    [
        s.entropy,
        s.size_nonuniformity,
        s.size_nonuniformity_norm,
        s.size_variance,
        s.gray_nonuniformity,
        s.gray_variance,
        s.high_gray_emphasis,
        s.large_emphasis,
        s.large_high_gray,
        s.large_low_gray,
        s.low_gray_emphasis,
        s.small_emphasis,
        s.small_high_gray,
        s.small_low_gray,
    ]
}
