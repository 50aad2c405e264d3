//! Gray-level co-occurrence matrix features.
//!
//! One symmetric matrix per unique 3D direction at distance 1 (13 directions).
//! Features are computed per direction on the normalized matrix and averaged
//! over the directions that contain at least one voxel pair. Gray levels are
//! the 1-based bin indices; `N_g` in Idmn/Idn is the number of bins.
//! Flat-region conventions: Correlation = 1, Imc1 = 0 when both marginal
//! entropies vanish, MCC = 1 when the ROI has a single gray level.

use nalgebra::{DMatrix, SymmetricEigen};

use super::discretize::DiscretizedRoi;
use super::DIRECTIONS_13;
use crate::error::{Error, Result};

pub const NAMES: [&str; 24] = [
    "Autocorrelation",
    "ClusterProminence",
    "ClusterShade",
    "ClusterTendency",
    "Contrast",
    "Correlation",
    "DifferenceAverage",
    "DifferenceEntropy",
    "DifferenceVariance",
    "Id",
    "Idm",
    "Idmn",
    "Idn",
    "Imc1",
    "Imc2",
    "InverseVariance",
    "JointAverage",
    "JointEnergy",
    "JointEntropy",
    "MCC",
    "MaximumProbability",
    "SumAverage",
    "SumEntropy",
    "SumSquares",
];

/// Raw symmetric co-occurrence counts, `ng x ng` row-major, one per direction.
pub fn glcm_matrices(disc: &DiscretizedRoi) -> Vec<Vec<u64>> {
    let dims = disc.dims();
    let ng = disc.n_levels() as usize;
    let levels = disc.levels();
    let idx = disc.roi().indices();
    DIRECTIONS_13
        .iter()
        .map(|&dir| {
            let mut m = vec![0u64; ng * ng];
            for &i in &idx {
                let a = levels[i] as usize;
                if let Some(n) = dims.offset(dims.coords(i), dir) {
                    let b = levels[dims.index(n)] as usize;
                    if b > 0 {
                        m[(a - 1) * ng + (b - 1)] += 1;
                        m[(b - 1) * ng + (a - 1)] += 1;
                    }
                }
            }
            m
        })
        .collect()
}

fn entropy(p: impl IntoIterator<Item = f64>) -> f64 {
    p.into_iter().filter(|v| *v > 0.0).map(|v| -v * v.log2()).sum()
}

/// Second-largest eigenvalue of `Q(i,j) = Σ_k p(i,k) p(j,k) / (px(i) px(k))`.
///
/// For a symmetric GLCM, `Q` is similar to `B²` with `B = D^-1/2 P D^-1/2`,
/// so its eigenvalues are the squares of the eigenvalues of `B`. Levels with
/// zero marginal contribute zero eigenvalues.
fn mcc(p: &[f64], px: &[f64], ng: usize, present: usize) -> f64 {
    if present <= 1 {
        return 1.0;
    }
    let active: Vec<usize> = (0..ng).filter(|&i| px[i] > 0.0).collect();
    let na = active.len();
    let b = DMatrix::from_fn(na, na, |r, c| {
        let (i, j) = (active[r], active[c]);
        p[i * ng + j] / (px[i] * px[j]).sqrt()
    });
    let mut eig: Vec<f64> = SymmetricEigen::new(b).eigenvalues.iter().map(|l| l * l).collect();
    eig.resize(present.max(na), 0.0);
    eig.sort_by(|a, b| b.total_cmp(a));
    eig[1].max(0.0).sqrt()
}

/// The 24 features of one normalized matrix.
pub(crate) fn direction_features(p: &[f64], ng: usize, present: usize) -> [f64; 24] {
    let lv = |i: usize| (i + 1) as f64;
    let mut px = vec![0.0; ng];
    for i in 0..ng {
        px[i] = p[i * ng..(i + 1) * ng].iter().sum();
    }
    let mu: f64 = (0..ng).map(|i| lv(i) * px[i]).sum();
    let var: f64 = (0..ng).map(|i| (lv(i) - mu).powi(2) * px[i]).sum();
    let mut p_sum = vec![0.0; 2 * ng + 1];
    let mut p_diff = vec![0.0; ng];
    let mut acc = [0.0f64; 12];
    let (mut hxy, mut hxy1, mut hxy2, mut max_p) = (0.0, 0.0, 0.0, 0.0f64);
    for i in 0..ng {
        for j in 0..ng {
            let v = p[i * ng + j];
            let pxy = px[i] * px[j];
            if pxy > 0.0 {
                hxy2 -= pxy * pxy.log2();
            }
            if v == 0.0 {
                continue;
            }
            let (a, b) = (lv(i), lv(j));
            let d = (a - b).abs();
            let s = a + b - 2.0 * mu;
            p_sum[i + j + 2] += v;
            p_diff[i.abs_diff(j)] += v;
            acc[0] += v * a * b;
            acc[1] += v * s.powi(4);
            acc[2] += v * s.powi(3);
            acc[3] += v * s * s;
            acc[4] += v * d * d;
            acc[5] += v / (1.0 + d);
            acc[6] += v / (1.0 + d * d);
            acc[7] += v / (1.0 + d * d / (ng * ng) as f64);
            acc[8] += v / (1.0 + d / ng as f64);
            acc[9] += v * v;
            hxy -= v * v.log2();
            hxy1 -= v * pxy.log2();
            max_p = max_p.max(v);
        }
    }
    let hx = entropy(px.iter().copied());
    let correlation = if var > 0.0 { (acc[0] - mu * mu) / var } else { 1.0 };
    let imc1 = if hx > 0.0 { (hxy - hxy1) / hx } else { 0.0 };
    let imc2 = (1.0 - (-2.0 * (hxy2 - hxy)).exp()).max(0.0).sqrt();
    let diff_avg: f64 = p_diff.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    let diff_var: f64 = p_diff.iter().enumerate().map(|(k, v)| (k as f64 - diff_avg).powi(2) * v).sum();
    let inv_var: f64 = p_diff.iter().enumerate().skip(1).map(|(k, v)| v / (k * k) as f64).sum();
    let sum_avg: f64 = p_sum.iter().enumerate().map(|(k, v)| k as f64 * v).sum();

    [
        acc[0],
        acc[1],
        acc[2],
        acc[3],
        acc[4],
        correlation,
        diff_avg,
        entropy(p_diff.iter().copied()),
        diff_var,
        acc[5],
        acc[6],
        acc[7],
        acc[8],
        imc1,
        imc2,
        inv_var,
        mu,
        acc[9],
        hxy,
        mcc(p, &px, ng, present),
        max_p,
        sum_avg,
        entropy(p_sum.iter().copied()),
        var,
    ]
}

pub fn glcm_features(disc: &DiscretizedRoi, lesion: u32) -> Result<[f64; 24]> {
    let ng = disc.n_levels() as usize;
    let present = super::present_levels(disc);
    let mut out = [0.0; 24];
    let mut used = 0usize;
    for m in glcm_matrices(disc) {
        let total: u64 = m.iter().sum();
        if total == 0 {
            continue;
        }
        let p: Vec<f64> = m.iter().map(|&c| c as f64 / total as f64).collect();
        for (o, v) in out.iter_mut().zip(direction_features(&p, ng, present)) {
            *o += v;
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::FeatureUndefined { lesion, reason: "GLCM has no voxel pair in any direction".into() });
    }
    for o in &mut out {
        *o /= used as f64;
    }
    Ok(out)
}
