//! Minimal single-file NIfTI-1 (`.nii`) reader and writer.
//!
//! Only uncompressed little-endian files are handled. Volumes are written as
//! float32, masks as uint8 and label maps as int32, always with a 352-byte
//! voxel offset (348-byte header plus an empty extension block).

use std::fs;
use std::path::Path;

use super::{BinaryMask, Dims, LabelMap, Volume3D};
use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;

/// Voxel datatypes accepted on read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiftiDatatype {
    U8,
    I16,
    I32,
    F32,
    F64,
}

impl NiftiDatatype {
    fn from_code(code: i16) -> Result<Self> {
        Ok(match code {
            2 => NiftiDatatype::U8,
            4 => NiftiDatatype::I16,
            8 => NiftiDatatype::I32,
            16 => NiftiDatatype::F32,
            64 => NiftiDatatype::F64,
            other => return Err(Error::Unsupported(format!("NIfTI datatype code {other}"))),
        })
    }

    fn code(self) -> i16 {
        match self {
            NiftiDatatype::U8 => 2,
            NiftiDatatype::I16 => 4,
            NiftiDatatype::I32 => 8,
            NiftiDatatype::F32 => 16,
            NiftiDatatype::F64 => 64,
        }
    }

    fn bytes(self) -> usize {
        match self {
            NiftiDatatype::U8 => 1,
            NiftiDatatype::I16 => 2,
            NiftiDatatype::I32 | NiftiDatatype::F32 => 4,
            NiftiDatatype::F64 => 8,
        }
    }
}

/// Decoded image before interpretation as a volume, mask or label map.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiImage {
    pub dims: Dims,
    pub spacing: [f64; 3],
    pub datatype: NiftiDatatype,
    pub data: Vec<f64>,
}

impl NiftiImage {
    pub fn into_volume(self, channel: impl Into<String>) -> Result<Volume3D> {
        Volume3D::new(self.dims, self.spacing, self.data, channel)
    }

    /// Interprets the image as a binary mask; every value must be 0 or 1.
    pub fn into_mask(self) -> Result<BinaryMask> {
        if let Some(v) = self.data.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::validation(format!("mask contains non-binary value {v}")));
        }
        BinaryMask::new(self.dims, self.data.iter().map(|v| *v == 1.0).collect())
    }

    pub fn into_label_map(self) -> Result<LabelMap> {
        let mut labels = Vec::with_capacity(self.data.len());
        for v in &self.data {
            if *v < 0.0 || v.fract() != 0.0 || *v > u32::MAX as f64 {
                return Err(Error::validation(format!("label map contains invalid label {v}")));
            }
            labels.push(*v as u32);
        }
        LabelMap::new(self.dims, labels)
    }
}

fn rd_i16(b: &[u8], at: usize) -> i16 {
    i16::from_le_bytes([b[at], b[at + 1]])
}

fn rd_i32(b: &[u8], at: usize) -> i32 {
    i32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn rd_f32(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

/// Reads a `.nii` file.
pub fn read_nifti(path: impl AsRef<Path>) -> Result<NiftiImage> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "gz") {
        return Err(Error::Unsupported(format!(
            "{}: compressed NIfTI is not supported, decompress to .nii first",
            path.display()
        )));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub(crate) fn decode(b: &[u8]) -> Result<NiftiImage> {
    if b.len() >= 2 && b[0] == 0x1f && b[1] == 0x8b {
        return Err(Error::Unsupported("gzip-compressed NIfTI".into()));
    }
    if b.len() < HEADER_SIZE {
        return Err(Error::Format(format!("file has {} bytes, header needs {HEADER_SIZE}", b.len())));
    }
    let sizeof_hdr = rd_i32(b, 0);
    if sizeof_hdr != HEADER_SIZE as i32 {
        if i32::from_be_bytes(b[0..4].try_into().unwrap()) == HEADER_SIZE as i32 {
            return Err(Error::Unsupported("big-endian NIfTI".into()));
        }
        return Err(Error::Format(format!("sizeof_hdr is {sizeof_hdr}, expected 348")));
    }
    if &b[344..348] != b"n+1\0" {
        return Err(Error::Format(format!("bad magic {:?}", &b[344..348])));
    }
    let ndim = rd_i16(b, 40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::Format(format!("dim[0] = {ndim} out of range")));
    }
    let mut extent = [1usize; 3];
    for d in 1..=ndim as usize {
        let n = rd_i16(b, 40 + 2 * d);
        if n < 1 {
            return Err(Error::Format(format!("dim[{d}] = {n} must be positive")));
        }
        if d <= 3 {
            extent[d - 1] = n as usize;
        } else if n != 1 {
            return Err(Error::Unsupported(format!("dim[{d}] = {n}; only 3D volumes are supported")));
        }
    }
    let dims = Dims(extent);
    let datatype = NiftiDatatype::from_code(rd_i16(b, 70))?;
    let mut spacing = [1.0; 3];
    for (a, s) in spacing.iter_mut().enumerate() {
        let p = rd_f32(b, 80 + 4 * a) as f64;
        *s = if p > 0.0 && p.is_finite() { p } else { 1.0 };
    }
    let vox_offset = rd_f32(b, 108);
    if !(vox_offset >= VOX_OFFSET as f32) || vox_offset.fract() != 0.0 {
        return Err(Error::Format(format!("vox_offset {vox_offset} must be an integer >= 352")));
    }
    let start = vox_offset as usize;
    let width = datatype.bytes();
    let end = start + dims.len() * width;
    if b.len() < end {
        return Err(Error::Format(format!("file truncated: {} bytes, voxel data ends at {end}", b.len())));
    }
    let raw = &b[start..end];
    let mut data: Vec<f64> = match datatype {
        NiftiDatatype::U8 => raw.iter().map(|&v| v as f64).collect(),
        NiftiDatatype::I16 => raw.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]]) as f64).collect(),
        NiftiDatatype::I32 => raw.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
        NiftiDatatype::F32 => raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
        NiftiDatatype::F64 => raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
    };
    let slope = rd_f32(b, 112) as f64;
    let inter = rd_f32(b, 116) as f64;
    if slope != 0.0 && slope.is_finite() && inter.is_finite() && (slope != 1.0 || inter != 0.0) {
        for v in &mut data {
            *v = *v * slope + inter;
        }
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Format(format!("non-finite voxel value at index {i}")));
    }
    Ok(NiftiImage { dims, spacing, datatype, data })
}

pub(crate) fn encode(dims: Dims, spacing: [f64; 3], datatype: NiftiDatatype, data: &[f64]) -> Result<Vec<u8>> {
    dims.ensure_non_empty()?;
    if dims.0.iter().any(|&n| n > i16::MAX as usize) {
        return Err(Error::validation(format!("dims {:?} exceed the NIfTI-1 limit", dims.0)));
    }
    let mut b = vec![0u8; VOX_OFFSET + dims.len() * datatype.bytes()];
    b[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    let dim: [i16; 8] = [3, dims.0[0] as i16, dims.0[1] as i16, dims.0[2] as i16, 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        b[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
    }
    b[70..72].copy_from_slice(&datatype.code().to_le_bytes());
    b[72..74].copy_from_slice(&((datatype.bytes() * 8) as i16).to_le_bytes());
    let pixdim: [f32; 8] = [1.0, spacing[0] as f32, spacing[1] as f32, spacing[2] as f32, 1.0, 1.0, 1.0, 1.0];
    for (i, p) in pixdim.iter().enumerate() {
        b[76 + 4 * i..80 + 4 * i].copy_from_slice(&p.to_le_bytes());
    }
    b[108..112].copy_from_slice(&(VOX_OFFSET as f32).to_le_bytes());
    b[112..116].copy_from_slice(&1.0f32.to_le_bytes());
    // xyzt_units: mm + sec
    b[123] = 2 | 8;
    // sform_code = 1 (scanner anatomical), diagonal affine from spacing
    b[254..256].copy_from_slice(&1i16.to_le_bytes());
    for (row, s) in spacing.iter().enumerate() {
        let at = 280 + 16 * row + 4 * row;
        b[at..at + 4].copy_from_slice(&(*s as f32).to_le_bytes());
    }
    b[344..348].copy_from_slice(b"n+1\0");

    let out = &mut b[VOX_OFFSET..];
    match datatype {
        NiftiDatatype::U8 => {
            for (o, v) in out.iter_mut().zip(data) {
                *o = *v as u8;
            }
        }
        NiftiDatatype::I16 => {
            for (o, v) in out.chunks_exact_mut(2).zip(data) {
                o.copy_from_slice(&(*v as i16).to_le_bytes());
            }
        }
        NiftiDatatype::I32 => {
            for (o, v) in out.chunks_exact_mut(4).zip(data) {
                o.copy_from_slice(&(*v as i32).to_le_bytes());
            }
        }
        NiftiDatatype::F32 => {
            for (o, v) in out.chunks_exact_mut(4).zip(data) {
                o.copy_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        NiftiDatatype::F64 => {
            for (o, v) in out.chunks_exact_mut(8).zip(data) {
                o.copy_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(b)
}

fn write_bytes(path: &Path, bytes: Vec<u8>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a volume as float32.
pub fn write_nifti(vol: &Volume3D, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), encode(vol.dims(), vol.spacing(), NiftiDatatype::F32, vol.data())?)
}

/// Writes a mask as uint8 with values 0/1.
pub fn write_mask(mask: &BinaryMask, spacing: [f64; 3], path: impl AsRef<Path>) -> Result<()> {
    let data: Vec<f64> = mask.bits().iter().map(|b| *b as u8 as f64).collect();
    write_bytes(path.as_ref(), encode(mask.dims(), spacing, NiftiDatatype::U8, &data)?)
}

/// Writes a label map as int32.
pub fn write_label_map(labels: &LabelMap, spacing: [f64; 3], path: impl AsRef<Path>) -> Result<()> {
    let data: Vec<f64> = labels.labels().iter().map(|l| *l as f64).collect();
    write_bytes(path.as_ref(), encode(labels.dims(), spacing, NiftiDatatype::I32, &data)?)
}
