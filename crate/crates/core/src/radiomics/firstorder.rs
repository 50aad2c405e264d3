//! First-order intensity statistics over the ROI.
//!
//! Percentiles use linear interpolation between order statistics. Entropy and
//! uniformity use the discretized histogram; every other feature uses the raw
//! map values. Skewness and kurtosis of a constant region are reported as 0;
//! kurtosis is the plain fourth standardized moment (not excess).

use super::discretize::DiscretizedRoi;
use crate::volume::Volume3D;

pub const NAMES: [&str; 18] = [
    "10Percentile",
    "90Percentile",
    "Energy",
    "Entropy",
    "InterquartileRange",
    "Kurtosis",
    "Maximum",
    "Mean",
    "MeanAbsoluteDeviation",
    "Median",
    "Minimum",
    "Range",
    "RobustMeanAbsoluteDeviation",
    "RootMeanSquared",
    "Skewness",
    "TotalEnergy",
    "Uniformity",
    "Variance",
];

/// Percentile `q` in `[0, 100]` of sorted values, linearly interpolated.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn first_order(map: &Volume3D, disc: &DiscretizedRoi) -> [f64; 18] {
    let idx = disc.roi().indices();
    let data = map.data();
    let values: Vec<f64> = idx.iter().map(|&i| data[i]).collect();
    let n = values.len() as f64;
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);

    let mu = mean(&values);
    let energy: f64 = values.iter().map(|x| x * x).sum();
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in &values {
        let d = x - mu;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skewness, kurtosis) = if m2 > 0.0 { (m3 / m2.powf(1.5), m4 / (m2 * m2)) } else { (0.0, 0.0) };

    let mut hist = vec![0usize; disc.n_levels() as usize + 1];
    for &i in &idx {
        hist[disc.levels()[i] as usize] += 1;
    }
    let (mut entropy, mut uniformity) = (0.0, 0.0);
    for &c in &hist[1..] {
        if c > 0 {
            let p = c as f64 / n;
            entropy -= p * p.log2();
            uniformity += p * p;
        }
    }

    let p10 = percentile(&sorted, 10.0);
    let p90 = percentile(&sorted, 90.0);
    let robust: Vec<f64> = values.iter().copied().filter(|x| *x >= p10 && *x <= p90).collect();
    let robust_mad = if robust.is_empty() {
        0.0
    } else {
        let rm = mean(&robust);
        mean(&robust.iter().map(|x| (x - rm).abs()).collect::<Vec<_>>())
    };
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];

    [
        p10,
        p90,
        energy,
        entropy,
        percentile(&sorted, 75.0) - percentile(&sorted, 25.0),
        kurtosis,
        max,
        mu,
        values.iter().map(|x| (x - mu).abs()).sum::<f64>() / n,
        percentile(&sorted, 50.0),
        min,
        max - min,
        robust_mad,
        (energy / n).sqrt(),
        skewness,
        map.voxel_volume() * energy,
        uniformity,
        m2,
    ]
}
