//! Lesion instances: connected components, TP/FP/FN matching and ROI dilation.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Dims, LabelMap, Voxel};

/// Voxel adjacency used for component labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Connectivity {
    Faces6,
    Edges18,
    #[default]
    Corners26,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            6 => Ok(Connectivity::Faces6),
            18 => Ok(Connectivity::Edges18),
            26 => Ok(Connectivity::Corners26),
            other => Err(Error::validation(format!("connectivity must be 6, 18 or 26, got {other}"))),
        }
    }

    /// Neighbor offsets, excluding the center.
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let max_nonzero = match self {
            Connectivity::Faces6 => 1,
            Connectivity::Edges18 => 2,
            Connectivity::Corners26 => 3,
        };
        let mut out = Vec::with_capacity(26);
        for dz in -1..=1isize {
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let nonzero = (dx != 0) as usize + (dy != 0) as usize + (dz != 0) as usize;
                    if nonzero > 0 && nonzero <= max_nonzero {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

/// Structuring element for [`dilate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Structuring {
    Neighborhood6,
    #[default]
    Neighborhood26,
}

/// One connected component of a mask (the lesion domain).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LesionInstance {
    pub id: u32,
    /// Voxels sorted in x-fastest scan order.
    pub voxels: Vec<Voxel>,
    /// Inclusive `(min, max)` corners.
    pub bbox: (Voxel, Voxel),
}

impl LesionInstance {
    /// Builds an instance from a voxel list, sorting it into scan order.
    pub fn new(id: u32, dims: Dims, mut voxels: Vec<Voxel>) -> Result<Self> {
        if voxels.is_empty() {
            return Err(Error::validation(format!("lesion {id} has no voxels")));
        }
        if let Some(v) = voxels.iter().find(|v| !dims.contains(**v)) {
            return Err(Error::validation(format!("lesion {id} voxel {v:?} outside dims {:?}", dims.0)));
        }
        voxels.sort_by_key(|v| dims.index(*v));
        voxels.dedup();
        let mut lo = voxels[0];
        let mut hi = voxels[0];
        for v in &voxels {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        Ok(LesionInstance { id, voxels, bbox: (lo, hi) })
    }

    pub fn cardinality(&self) -> usize {
        self.voxels.len()
    }

    pub fn mask(&self, dims: Dims) -> BinaryMask {
        let mut m = BinaryMask::empty(dims);
        for &v in &self.voxels {
            m.set(v, true);
        }
        m
    }
}

/// Labels the connected components of `mask`.
///
/// Labels follow the order in which each component's first voxel appears in an
/// x-fastest scan, so the output is deterministic.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> (LabelMap, Vec<LesionInstance>) {
    let dims = mask.dims();
    let offsets = connectivity.offsets();
    let mut labels = vec![0u32; dims.len()];
    let mut instances = Vec::new();
    let mut queue = VecDeque::new();
    let mut next = 0u32;
    for start in 0..dims.len() {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        let mut voxels = Vec::new();
        while let Some(i) = queue.pop_front() {
            let v = dims.coords(i);
            voxels.push(v);
            for off in &offsets {
                if let Some(n) = dims.offset(v, *off) {
                    let j = dims.index(n);
                    if mask.bits()[j] && labels[j] == 0 {
                        labels[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
        instances.push(LesionInstance::new(next, dims, voxels).expect("component voxels are in range"));
    }
    let map = LabelMap::new(dims, labels).expect("labels are assigned consecutively");
    (map, instances)
}

/// Splits a label map into per-label instances (ids equal labels).
pub fn instances_from_labels(labels: &LabelMap) -> Vec<LesionInstance> {
    let dims = labels.dims();
    let mut voxels: Vec<Vec<Voxel>> = vec![Vec::new(); labels.n_labels() as usize];
    for (i, &l) in labels.labels().iter().enumerate() {
        if l > 0 {
            voxels[l as usize - 1].push(dims.coords(i));
        }
    }
    voxels
        .into_iter()
        .enumerate()
        .map(|(k, v)| LesionInstance::new(k as u32 + 1, dims, v).expect("labels are gapless"))
        .collect()
}

/// Detection-level confusion between predicted and ground-truth instances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Predicted instance id with the ground-truth ids it overlaps.
    pub tp: Vec<(u32, Vec<u32>)>,
    pub fp: Vec<u32>,
    pub fn_: Vec<u32>,
}

impl MatchResult {
    pub fn n_tp(&self) -> usize {
        self.tp.len()
    }

    pub fn n_fp(&self) -> usize {
        self.fp.len()
    }

    pub fn n_fn(&self) -> usize {
        self.fn_.len()
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        (self.n_tp(), self.n_fp(), self.n_fn())
    }

    pub fn is_tp(&self, pred_id: u32) -> bool {
        self.tp.iter().any(|(id, _)| *id == pred_id)
    }
}

/// Matches predicted to ground-truth instances by any (non-zero) voxel overlap.
///
/// A prediction touching several ground-truth lesions counts once as TP, and
/// every touched ground-truth lesion is removed from the FN list.
pub fn match_lesions(pred: &LabelMap, gt: &LabelMap) -> Result<MatchResult> {
    pred.dims().ensure_same(&gt.dims(), "match_lesions")?;
    let np = pred.n_labels() as usize;
    let ng = gt.n_labels() as usize;
    let mut overlaps: Vec<Vec<u32>> = vec![Vec::new(); np];
    let mut gt_hit = vec![false; ng];
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        if p > 0 && g > 0 {
            let list = &mut overlaps[p as usize - 1];
            if !list.contains(&g) {
                list.push(g);
            }
            gt_hit[g as usize - 1] = true;
        }
    }
    let mut tp = Vec::new();
    let mut fp = Vec::new();
    for (k, mut list) in overlaps.into_iter().enumerate() {
        let id = k as u32 + 1;
        if list.is_empty() {
            fp.push(id);
        } else {
            list.sort_unstable();
            tp.push((id, list));
        }
    }
    let fn_ = gt_hit.iter().enumerate().filter(|(_, hit)| !**hit).map(|(k, _)| k as u32 + 1).collect();
    Ok(MatchResult { tp, fp, fn_ })
}

/// Morphological dilation clipped at the volume boundary.
///
/// Radius `r` is implemented as `r` successive unit dilations.
pub fn dilate(mask: &BinaryMask, radius: usize, structuring: Structuring) -> Result<BinaryMask> {
    if radius == 0 {
        return Err(Error::validation("dilation radius must be at least 1"));
    }
    let conn = match structuring {
        Structuring::Neighborhood6 => Connectivity::Faces6,
        Structuring::Neighborhood26 => Connectivity::Corners26,
    };
    let offsets = conn.offsets();
    let dims = mask.dims();
    let mut current = mask.clone();
    for _ in 0..radius {
        let mut next = current.clone();
        for i in current.indices() {
            let v = dims.coords(i);
            for off in &offsets {
                if let Some(n) = dims.offset(v, *off) {
                    next.set(n, true);
                }
            }
        }
        current = next;
    }
    Ok(current)
}
