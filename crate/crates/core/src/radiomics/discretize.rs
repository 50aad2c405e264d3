use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Dims, Volume3D};

/// Fixed-bin-width gray levels of an ROI, anchored at the ROI minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedRoi {
    dims: Dims,
    /// Level per voxel, `0` outside the ROI, `1..=n_levels` inside.
    levels: Vec<u32>,
    n_levels: u32,
    bin_width: f64,
    origin: f64,
    roi: BinaryMask,
}

impl DiscretizedRoi {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn n_levels(&self) -> u32 {
        self.n_levels
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    /// Lower edge of the first bin (ROI minimum).
    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn roi(&self) -> &BinaryMask {
        &self.roi
    }

    /// Builds a discretized ROI directly from levels; `0` marks background.
    pub fn from_levels(dims: Dims, levels: Vec<u32>) -> Result<Self> {
        if levels.len() != dims.len() {
            return Err(Error::validation("level array does not match dims"));
        }
        let n_levels = levels.iter().copied().max().unwrap_or(0);
        if n_levels == 0 {
            return Err(Error::validation("discretized ROI is empty"));
        }
        let roi = BinaryMask::new(dims, levels.iter().map(|l| *l > 0).collect())?;
        Ok(DiscretizedRoi { dims, levels, n_levels, bin_width: 1.0, origin: 1.0, roi })
    }
}

/// `level = floor((x - min) / W) + 1`, so the ROI maximum lands in the last bin
/// and `N_g = floor((max - min) / W) + 1`.
pub fn discretize(map: &Volume3D, roi: &BinaryMask, bin_width: f64) -> Result<DiscretizedRoi> {
    roi.dims().ensure_same(&map.dims(), "discretize ROI")?;
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::validation(format!("bin width must be positive, got {bin_width}")));
    }
    let idx = roi.indices();
    if idx.is_empty() {
        return Err(Error::validation("ROI is empty"));
    }
    let data = map.data();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &i in &idx {
        lo = lo.min(data[i]);
        hi = hi.max(data[i]);
    }
    let n_levels = ((hi - lo) / bin_width).floor() as u32 + 1;
    let mut levels = vec![0u32; map.dims().len()];
    for &i in &idx {
        let l = ((data[i] - lo) / bin_width).floor() as u32 + 1;
        levels[i] = l.clamp(1, n_levels);
    }
    Ok(DiscretizedRoi { dims: map.dims(), levels, n_levels, bin_width, origin: lo, roi: roi.clone() })
}
