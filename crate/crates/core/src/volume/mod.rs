//! Dense 3D scalar volumes, binary masks and label maps.
//!
//! Voxel data is stored flat in x-fastest order, matching NIfTI on disk:
//! the voxel `(x, y, z)` lives at `x + nx * (y + ny * z)`.

mod nifti;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use nifti::{read_nifti, write_label_map, write_mask, write_nifti, NiftiDatatype, NiftiImage};

/// Integer voxel coordinate `[x, y, z]`.
pub type Voxel = [usize; 3];

/// Volume extent in voxels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims(pub [usize; 3]);

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Dims([nx, ny, nz])
    }

    pub fn nx(&self) -> usize {
        self.0[0]
    }

    pub fn ny(&self) -> usize {
        self.0[1]
    }

    pub fn nz(&self) -> usize {
        self.0[2]
    }

    /// Number of voxels.
    pub fn len(&self) -> usize {
        self.0[0] * self.0[1] * self.0[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, [x, y, z]: Voxel) -> usize {
        x + self.0[0] * (y + self.0[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> Voxel {
        let x = idx % self.0[0];
        let rest = idx / self.0[0];
        [x, rest % self.0[1], rest / self.0[1]]
    }

    pub fn contains(&self, v: Voxel) -> bool {
        v[0] < self.0[0] && v[1] < self.0[1] && v[2] < self.0[2]
    }

    /// Returns `v + offset` when the result stays inside the volume.
    #[inline]
    pub fn offset(&self, v: Voxel, offset: [isize; 3]) -> Option<Voxel> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let c = v[a] as isize + offset[a];
            if c < 0 || c >= self.0[a] as isize {
                return None;
            }
            out[a] = c as usize;
        }
        Some(out)
    }

    pub(crate) fn ensure_non_empty(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::validation(format!("volume dims {:?} contain a zero extent", self.0)));
        }
        Ok(())
    }

    pub(crate) fn ensure_same(&self, other: &Dims, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::validation(format!(
                "{what}: dims {:?} do not match {:?}",
                self.0, other.0
            )));
        }
        Ok(())
    }
}

/// Dense scalar field with voxel spacing and a channel tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: Dims,
    spacing: [f64; 3],
    data: Vec<f64>,
    channel: String,
}

impl Volume3D {
    pub fn new(dims: Dims, spacing: [f64; 3], data: Vec<f64>, channel: impl Into<String>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::validation(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                dims.0
            )));
        }
        if spacing.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::validation(format!("spacing {spacing:?} must be positive")));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!("non-finite value at voxel {i}")));
        }
        Ok(Volume3D { dims, spacing, data, channel: channel.into() })
    }

    pub fn zeros(dims: Dims, spacing: [f64; 3], channel: impl Into<String>) -> Self {
        Volume3D { dims, spacing, data: vec![0.0; dims.len()], channel: channel.into() }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self) -> &str {
        &self.channel
    }

    pub fn get(&self, v: Voxel) -> f64 {
        self.data[self.dims.index(v)]
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn with_channel(mut self, channel: impl Into<String>) -> Self {
        self.channel = channel.into();
        self
    }

    /// Product of voxel spacings (mm^3).
    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Applies `f` to every value, rejecting non-finite results.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Volume3D> {
        Volume3D::new(self.dims, self.spacing, self.data.iter().map(|&v| f(v)).collect(), self.channel.clone())
    }
}

/// One boolean per voxel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    dims: Dims,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: Dims, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != dims.len() {
            return Err(Error::validation(format!(
                "mask length {} does not match dims {:?}",
                bits.len(),
                dims.0
            )));
        }
        Ok(BinaryMask { dims, bits })
    }

    pub fn empty(dims: Dims) -> Self {
        BinaryMask { dims, bits: vec![false; dims.len()] }
    }

    pub fn from_voxels(dims: Dims, voxels: &[Voxel]) -> Result<Self> {
        let mut mask = BinaryMask::empty(dims);
        for &v in voxels {
            if !dims.contains(v) {
                return Err(Error::validation(format!("voxel {v:?} outside dims {:?}", dims.0)));
            }
            mask.bits[dims.index(v)] = true;
        }
        Ok(mask)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, v: Voxel) -> bool {
        self.bits[self.dims.index(v)]
    }

    pub fn set(&mut self, v: Voxel, value: bool) {
        let i = self.dims.index(v);
        self.bits[i] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Linear indices of foreground voxels, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.bits.iter().enumerate().filter_map(|(i, b)| b.then_some(i)).collect()
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }
}

/// Non-negative integer label per voxel; 0 is background and labels are gapless.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    dims: Dims,
    labels: Vec<u32>,
    n_labels: u32,
}

impl LabelMap {
    pub fn new(dims: Dims, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != dims.len() {
            return Err(Error::validation(format!(
                "label length {} does not match dims {:?}",
                labels.len(),
                dims.0
            )));
        }
        let n_labels = labels.iter().copied().max().unwrap_or(0);
        let mut seen = vec![false; n_labels as usize + 1];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().skip(1).position(|s| !*s) {
            return Err(Error::validation(format!(
                "label set has a gap: label {} is absent but {} is present",
                missing + 1,
                n_labels
            )));
        }
        Ok(LabelMap { dims, labels, n_labels })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Largest label K; labels are exactly `0..=K`.
    pub fn n_labels(&self) -> u32 {
        self.n_labels
    }

    pub fn get(&self, v: Voxel) -> u32 {
        self.labels[self.dims.index(v)]
    }

    pub fn foreground(&self) -> BinaryMask {
        BinaryMask { dims: self.dims, bits: self.labels.iter().map(|l| *l > 0).collect() }
    }

    pub fn mask_of(&self, label: u32) -> BinaryMask {
        BinaryMask { dims: self.dims, bits: self.labels.iter().map(|l| *l == label).collect() }
    }
}

/// Multi-channel input: one [`Volume3D`] per channel, all sharing dims.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeStack {
    channels: Vec<Volume3D>,
}

impl VolumeStack {
    pub fn new(channels: Vec<Volume3D>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::validation("volume stack needs at least one channel"))?;
        for c in &channels[1..] {
            c.dims().ensure_same(&first.dims(), "volume stack channel")?;
        }
        Ok(VolumeStack { channels })
    }

    pub fn dims(&self) -> Dims {
        self.channels[0].dims()
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.channels[0].spacing()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, c: usize) -> &Volume3D {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Volume3D] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Volume3D> {
        self.channels
    }
}

/// Standardizes `vol` to zero mean and unit population standard deviation.
///
/// Statistics come from the masked voxels when a mask is given; every voxel
/// (inside or outside the mask) is mapped with the same affine transform.
pub fn zscore(vol: &Volume3D, mask: Option<&BinaryMask>) -> Result<Volume3D> {
    let (mean, std) = zscore_params(vol, mask)?;
    vol.map(|v| (v - mean) / std)
}

/// Mean and population standard deviation used by [`zscore`].
pub fn zscore_params(vol: &Volume3D, mask: Option<&BinaryMask>) -> Result<(f64, f64)> {
    if let Some(m) = mask {
        m.dims().ensure_same(&vol.dims(), "zscore mask")?;
    }
    let selected = |i: usize| mask.is_none_or(|m| m.bits()[i]);
    let (mut n, mut sum) = (0usize, 0.0);
    for (i, v) in vol.data().iter().enumerate() {
        if selected(i) {
            n += 1;
            sum += v;
        }
    }
    if n == 0 {
        return Err(Error::Degenerate("zscore statistics region is empty".into()));
    }
    let mean = sum / n as f64;
    let mut ss = 0.0;
    for (i, v) in vol.data().iter().enumerate() {
        if selected(i) {
            ss += (v - mean) * (v - mean);
        }
    }
    let std = (ss / n as f64).sqrt();
    if !(std > 0.0) || std <= f64::EPSILON * mean.abs() {
        return Err(Error::Degenerate("zscore region has zero standard deviation".into()));
    }
    Ok((mean, std))
}
