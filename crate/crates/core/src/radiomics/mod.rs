//! Radiomic features of a saliency map inside a dilated lesion ROI.
//!
//! 93 features in six families: first order (18), GLCM (24), GLRLM (16),
//! GLSZM (16), GLDM (14) and NGTDM (5). Shape features are not computed.
//! Texture families work on fixed-bin-width gray levels anchored at the ROI
//! minimum.
//!
//! Degenerate-region conventions (each is recorded in [`FeatureVector::notes`]):
//! skewness/kurtosis of a constant region are 0, GLCM correlation of a flat
//! matrix is 1, Imc1 with zero marginal entropy is 0, MCC of a single-level ROI
//! is 1, NGTDM coarseness with zero differences is 1e6.

mod discretize;
pub mod firstorder;
pub mod glcm;
pub mod gldm;
pub mod glrlm;
pub mod glszm;
mod log_filter;
pub mod ngtdm;
pub mod sizemat;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use discretize::{discretize, DiscretizedRoi};
pub use log_filter::laplacian_of_gaussian;

use crate::error::{Error, Result};
use crate::instances::{dilate, LesionInstance, Structuring};
use crate::saliency::SaliencyMap;
use crate::volume::{zscore, BinaryMask, Volume3D};

/// The 13 unique 3D unit offsets (one of each opposite pair).
pub const DIRECTIONS_13: [[isize; 3]; 13] = [
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [-1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [-1, 0, 1],
    [0, 1, 1],
    [0, -1, 1],
    [1, 1, 1],
    [-1, 1, 1],
    [1, -1, 1],
    [-1, -1, 1],
];

/// Features per image type.
pub const N_FEATURES: usize = 93;

/// Below this many gray levels texture features carry little information.
pub const MIN_INFORMATIVE_LEVELS: u32 = 8;

const FAMILIES: [(&str, &[&str]); 6] = [
    ("firstorder", &firstorder::NAMES),
    ("glcm", &glcm::NAMES),
    ("glrlm", &glrlm::NAMES),
    ("glszm", &glszm::NAMES),
    ("gldm", &gldm::NAMES),
    ("ngtdm", &ngtdm::NAMES),
];

/// Number of distinct gray levels present in the ROI.
pub(crate) fn present_levels(disc: &DiscretizedRoi) -> usize {
    let mut seen = vec![false; disc.n_levels() as usize + 1];
    for &l in disc.levels() {
        seen[l as usize] = true;
    }
    seen[1..].iter().filter(|s| **s).count()
}

fn names_with_prefix(prefix: &str) -> Vec<String> {
    FAMILIES
        .iter()
        .flat_map(|(family, names)| names.iter().map(move |n| format!("{prefix}_{family}_{n}")))
        .collect()
}

/// The frozen list of 93 original-image feature names, in output order.
pub fn feature_names() -> Vec<String> {
    names_with_prefix("original")
}

fn log_prefix(sigma: f64) -> String {
    format!("log-sigma-{}-mm-3D", format!("{sigma:.1}").replace('.', "-"))
}

/// Names for a configuration: the 93 original features, then 93 per LoG sigma.
pub fn feature_names_for(cfg: &RadiomicsConfig) -> Vec<String> {
    let mut names = feature_names();
    for &s in &cfg.log_sigmas {
        names.extend(names_with_prefix(&log_prefix(s)));
    }
    names
}

/// Detection group of a lesion candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Group {
    TP,
    FP,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::TP => "TP",
            Group::FP => "FP",
        })
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "TP" => Ok(Group::TP),
            "FP" => Ok(Group::FP),
            other => Err(Error::validation(format!("unknown group {other:?}, expected TP or FP"))),
        }
    }
}

/// Extraction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadiomicsConfig {
    pub bin_width: f64,
    pub dilation_radius: usize,
    pub structuring: Structuring,
    /// Laplacian-of-Gaussian scales in mm; empty for original-image features only.
    #[serde(default)]
    pub log_sigmas: Vec<f64>,
}

impl Default for RadiomicsConfig {
    fn default() -> Self {
        RadiomicsConfig { bin_width: 10.0, dilation_radius: 1, structuring: Structuring::Neighborhood26, log_sigmas: Vec::new() }
    }
}

/// Features of one lesion candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub patient: String,
    pub lesion_id: u32,
    pub group: Option<Group>,
    pub values: Vec<f64>,
    /// Gray levels of the original-image discretization.
    pub n_levels: u32,
    /// Degenerate-case conventions and warnings applied to this lesion.
    pub notes: Vec<String>,
}

/// All 93 features of `map` inside `roi`.
pub fn compute_features(map: &Volume3D, roi: &BinaryMask, bin_width: f64, lesion: u32, notes: &mut Vec<String>) -> Result<(Vec<f64>, u32)> {
    let disc = discretize(map, roi, bin_width)?;
    let fo = firstorder::first_order(map, &disc);
    let gl = glcm::glcm_features(&disc, lesion)?;
    let rl = glrlm::glrlm_features(&disc);
    let sz = glszm::glszm_features(&disc);
    let dm = gldm::gldm_features(&disc);
    let nt = ngtdm::ngtdm_features(&disc, lesion)?;

    let mut note = |s: &str| {
        if !notes.iter().any(|n| n == s) {
            notes.push(s.to_string());
        }
    };
    if disc.n_levels() < MIN_INFORMATIVE_LEVELS {
        note("few gray levels: texture features are weakly informative at this bin width");
    }
    if fo[17] == 0.0 {
        note("constant ROI: skewness and kurtosis set to 0");
    }
    if present_levels(&disc) == 1 {
        note("single gray level: GLCM correlation = 1, Imc1 = 0, MCC = 1, NGTDM coarseness = 1e6");
    }

    let mut values = Vec::with_capacity(N_FEATURES);
    values.extend_from_slice(&fo);
    values.extend_from_slice(&gl);
    values.extend_from_slice(&rl);
    values.extend_from_slice(&sz);
    values.extend_from_slice(&dm);
    values.extend_from_slice(&nt);
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::FeatureUndefined { lesion, reason: format!("feature {} is not finite", feature_names()[i]) });
    }
    Ok((values, disc.n_levels()))
}

/// Features of a saliency map for one lesion.
///
/// The map is z-scored over `brain` (the whole volume when `None`), the lesion
/// mask is dilated, and all features are computed inside the dilated ROI.
pub fn extract_all(
    saliency: &SaliencyMap,
    lesion: &LesionInstance,
    cfg: &RadiomicsConfig,
    brain: Option<&BinaryMask>,
) -> Result<FeatureVector> {
    let dims = saliency.map.dims();
    if let Some(v) = lesion.voxels.iter().find(|v| !dims.contains(**v)) {
        return Err(Error::validation(format!("lesion {} voxel {v:?} outside saliency dims", lesion.id)));
    }
    let standardized = zscore(&saliency.map, brain).map_err(|e| Error::FeatureUndefined {
        lesion: lesion.id,
        reason: format!("cannot standardize saliency map: {e}"),
    })?;
    let roi = dilate(&lesion.mask(dims), cfg.dilation_radius, cfg.structuring)?;
    let mut notes = Vec::new();
    let (mut values, n_levels) = compute_features(&standardized, &roi, cfg.bin_width, lesion.id, &mut notes)?;
    if n_levels < MIN_INFORMATIVE_LEVELS {
        log::warn!(
            "lesion {}: only {n_levels} gray level(s) at bin width {}; texture features may collapse",
            lesion.id,
            cfg.bin_width
        );
    }
    for &sigma in &cfg.log_sigmas {
        let filtered = laplacian_of_gaussian(&standardized, sigma)?;
        let (v, _) = compute_features(&filtered, &roi, cfg.bin_width, lesion.id, &mut notes)?;
        values.extend(v);
    }
    Ok(FeatureVector { patient: String::new(), lesion_id: lesion.id, group: None, values, n_levels, notes })
}
