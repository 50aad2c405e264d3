//! Gray-level size-zone matrix features (zones are 26-connected).

use std::collections::VecDeque;

use super::discretize::DiscretizedRoi;
use super::sizemat::SizeMatrix;
use crate::instances::Connectivity;

pub const NAMES: [&str; 16] = [
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "GrayLevelVariance",
    "HighGrayLevelZoneEmphasis",
    "LargeAreaEmphasis",
    "LargeAreaHighGrayLevelEmphasis",
    "LargeAreaLowGrayLevelEmphasis",
    "LowGrayLevelZoneEmphasis",
    "SizeZoneNonUniformity",
    "SizeZoneNonUniformityNormalized",
    "SmallAreaEmphasis",
    "SmallAreaHighGrayLevelEmphasis",
    "SmallAreaLowGrayLevelEmphasis",
    "ZoneEntropy",
    "ZonePercentage",
    "ZoneVariance",
];

pub fn glszm_matrix(disc: &DiscretizedRoi) -> SizeMatrix {
    let dims = disc.dims();
    let levels = disc.levels();
    let offsets = Connectivity::Corners26.offsets();
    let mut seen = vec![false; levels.len()];
    let mut zones = Vec::new();
    let mut queue = VecDeque::new();
    for start in disc.roi().indices() {
        if seen[start] {
            continue;
        }
        let level = levels[start];
        seen[start] = true;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let v = dims.coords(i);
            for off in &offsets {
                if let Some(n) = dims.offset(v, *off) {
                    let j = dims.index(n);
                    if !seen[j] && levels[j] == level {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        zones.push((level, size));
    }
    SizeMatrix::new(disc.n_levels() as usize, zones)
}

pub fn glszm_features(disc: &DiscretizedRoi) -> [f64; 16] {
    let s = glszm_matrix(disc).stats();
    [
        s.gray_nonuniformity,
        s.gray_nonuniformity_norm,
        s.gray_variance,
        s.high_gray_emphasis,
        s.large_emphasis,
        s.large_high_gray,
        s.large_low_gray,
        s.low_gray_emphasis,
        s.size_nonuniformity,
        s.size_nonuniformity_norm,
        s.small_emphasis,
        s.small_high_gray,
        s.small_low_gray,
        s.entropy,
        s.total / disc.roi().count() as f64,
        s.size_variance,
    ]
}
