//! Brute-force radiomics reference: voxel lists, pairwise scans, hash lookups.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;

pub type Coord = [i64; 3];

pub struct Roi {
    /// `(coord, raw value)` for every ROI voxel.
    pub voxels: Vec<(Coord, f64)>,
    pub bin_width: f64,
    pub voxel_volume: f64,
}

struct Levels {
    at: HashMap<Coord, usize>,
    list: Vec<(Coord, usize)>,
    ng: usize,
}

fn discretize(roi: &Roi) -> Levels {
    let min = roi.voxels.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let max = roi.voxels.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let ng = ((max - min) / roi.bin_width).floor() as usize + 1;
    let list: Vec<(Coord, usize)> =
        roi.voxels.iter().map(|(c, x)| (*c, (((x - min) / roi.bin_width).floor() as usize + 1).min(ng))).collect();
    Levels { at: list.iter().copied().collect(), list, ng }
}

fn chebyshev1(a: Coord, b: Coord) -> bool {
    a != b && (0..3).all(|k| (a[k] - b[k]).abs() <= 1)
}

fn log2(x: f64) -> f64 {
    x.log2()
}

/// Linear-interpolation percentile of a sorted list (`q` in [0, 1]).
fn pct(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let f = h.floor();
    let lo = sorted[f as usize];
    let hi = sorted[(f as usize + 1).min(sorted.len() - 1)];
    lo + (h - f) * (hi - lo)
}

fn first_order(roi: &Roi, lv: &Levels, out: &mut BTreeMap<String, f64>) {
    let x: Vec<f64> = roi.voxels.iter().map(|v| v.1).collect();
    let n = x.len() as f64;
    let mut s = x.clone();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = x.iter().sum::<f64>() / n;
    let central = |k: i32| x.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    let var = central(2);
    let energy: f64 = x.iter().map(|v| v * v).sum();
    let mut hist = vec![0.0; lv.ng + 1];
    for (_, l) in &lv.list {
        hist[*l] += 1.0;
    }
    let p10 = pct(&s, 0.1);
    let p90 = pct(&s, 0.9);
    let inner: Vec<f64> = x.iter().copied().filter(|v| *v >= p10 && *v <= p90).collect();
    let inner_mean = inner.iter().sum::<f64>() / inner.len() as f64;
    let mut put = |k: &str, v: f64| {
        out.insert(format!("original_firstorder_{k}"), v);
    };
    put("10Percentile", p10);
    put("90Percentile", p90);
    put("Energy", energy);
    put("Entropy", hist.iter().filter(|c| **c > 0.0).map(|c| -(c / n) * log2(c / n)).sum());
    put("InterquartileRange", pct(&s, 0.75) - pct(&s, 0.25));
    put("Kurtosis", if var == 0.0 { 0.0 } else { central(4) / (var * var) });
    put("Maximum", s[s.len() - 1]);
    put("Mean", mean);
    put("MeanAbsoluteDeviation", x.iter().map(|v| (v - mean).abs()).sum::<f64>() / n);
    put("Median", pct(&s, 0.5));
    put("Minimum", s[0]);
    put("Range", s[s.len() - 1] - s[0]);
    let robust_mad = if inner.is_empty() {
        0.0
    } else {
        inner.iter().map(|v| (v - inner_mean).abs()).sum::<f64>() / inner.len() as f64
    };
    put("RobustMeanAbsoluteDeviation", robust_mad);
    put("RootMeanSquared", (energy / n).sqrt());
    put("Skewness", if var == 0.0 { 0.0 } else { central(3) / var.powf(1.5) });
    put("TotalEnergy", roi.voxel_volume * energy);
    put("Uniformity", hist.iter().map(|c| (c / n).powi(2)).sum());
    put("Variance", var);
}

pub const DIRECTIONS: [Coord; 13] = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 1, 0],
    [1, -1, 0],
    [1, 0, 1],
    [1, 0, -1],
    [0, 1, 1],
    [0, 1, -1],
    [1, 1, 1],
    [1, 1, -1],
    [1, -1, 1],
    [1, -1, -1],
];

fn add(a: Coord, b: Coord) -> Coord {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: Coord, b: Coord) -> Coord {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Second-largest eigenvalue of Q, taken as the squared second singular value
/// of `Dx^-1/2 P Dy^-1/2`.
fn mcc(p: &[Vec<f64>], present: usize) -> f64 {
    if present == 1 {
        return 1.0;
    }
    let ng = p.len();
    let px: Vec<f64> = p.iter().map(|r| r.iter().sum()).collect();
    let py: Vec<f64> = (0..ng).map(|j| (0..ng).map(|i| p[i][j]).sum()).collect();
    let rows: Vec<usize> = (0..ng).filter(|&i| px[i] > 0.0).collect();
    let cols: Vec<usize> = (0..ng).filter(|&j| py[j] > 0.0).collect();
    if rows.len() < 2 {
        return 0.0;
    }
    let s = DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
        let (i, j) = (rows[r], cols[c]);
        p[i][j] / (px[i] * py[j]).sqrt()
    });
    let svd = nalgebra::SVD::try_new(s, false, false, 1e-15, 100_000).expect("svd converges");
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let lambda2 = sv.get(1).map_or(0.0, |v| v * v);
    lambda2.max(0.0).sqrt()
}

fn glcm_direction(p: &[Vec<f64>], present: usize) -> Vec<(&'static str, f64)> {
    let ng = p.len();
    let g = |i: usize| (i + 1) as f64;
    let px: Vec<f64> = p.iter().map(|r| r.iter().sum()).collect();
    let py: Vec<f64> = (0..ng).map(|j| (0..ng).map(|i| p[i][j]).sum()).collect();
    let mux: f64 = (0..ng).map(|i| g(i) * px[i]).sum();
    let muy: f64 = (0..ng).map(|j| g(j) * py[j]).sum();
    let sx = (0..ng).map(|i| (g(i) - mux).powi(2) * px[i]).sum::<f64>().sqrt();
    let sy = (0..ng).map(|j| (g(j) - muy).powi(2) * py[j]).sum::<f64>().sqrt();
    let mut psum = vec![0.0; 2 * ng + 1];
    let mut pdiff = vec![0.0; ng];
    let sum_over = |f: &dyn Fn(usize, usize, f64) -> f64| -> f64 {
        let mut t = 0.0;
        for i in 0..ng {
            for j in 0..ng {
                if p[i][j] > 0.0 {
                    t += f(i, j, p[i][j]);
                }
            }
        }
        t
    };
    for i in 0..ng {
        for j in 0..ng {
            psum[i + j + 2] += p[i][j];
            pdiff[(i as i64 - j as i64).unsigned_abs() as usize] += p[i][j];
        }
    }
    let ent = |v: &[f64]| v.iter().filter(|x| **x > 0.0).map(|x| -x * log2(*x)).sum::<f64>();
    let hx = ent(&px);
    let hy = ent(&py);
    let hxy = sum_over(&|_, _, v| -v * log2(v));
    let hxy1 = sum_over(&|i, j, v| -v * log2(px[i] * py[j]));
    let mut hxy2 = 0.0;
    for i in 0..ng {
        for j in 0..ng {
            let q = px[i] * py[j];
            if q > 0.0 {
                hxy2 -= q * log2(q);
            }
        }
    }
    let da: f64 = (0..ng).map(|k| k as f64 * pdiff[k]).sum();
    let nn = ng as f64;
    vec![
        ("Autocorrelation", sum_over(&|i, j, v| v * g(i) * g(j))),
        ("ClusterProminence", sum_over(&|i, j, v| v * (g(i) + g(j) - mux - muy).powi(4))),
        ("ClusterShade", sum_over(&|i, j, v| v * (g(i) + g(j) - mux - muy).powi(3))),
        ("ClusterTendency", sum_over(&|i, j, v| v * (g(i) + g(j) - mux - muy).powi(2))),
        ("Contrast", sum_over(&|i, j, v| v * (g(i) - g(j)).powi(2))),
        (
            "Correlation",
            if sx * sy == 0.0 { 1.0 } else { (sum_over(&|i, j, v| v * g(i) * g(j)) - mux * muy) / (sx * sy) },
        ),
        ("DifferenceAverage", da),
        ("DifferenceEntropy", ent(&pdiff)),
        ("DifferenceVariance", (0..ng).map(|k| (k as f64 - da).powi(2) * pdiff[k]).sum()),
        ("Id", sum_over(&|i, j, v| v / (1.0 + (g(i) - g(j)).abs()))),
        ("Idm", sum_over(&|i, j, v| v / (1.0 + (g(i) - g(j)).powi(2)))),
        ("Idmn", sum_over(&|i, j, v| v / (1.0 + (g(i) - g(j)).powi(2) / (nn * nn)))),
        ("Idn", sum_over(&|i, j, v| v / (1.0 + (g(i) - g(j)).abs() / nn))),
        ("Imc1", if hx.max(hy) == 0.0 { 0.0 } else { (hxy - hxy1) / hx.max(hy) }),
        ("Imc2", (1.0 - (-2.0 * (hxy2 - hxy)).exp()).max(0.0).sqrt()),
        ("InverseVariance", sum_over(&|i, j, v| if i == j { 0.0 } else { v / (g(i) - g(j)).powi(2) })),
        ("JointAverage", mux),
        ("JointEnergy", sum_over(&|_, _, v| v * v)),
        ("JointEntropy", hxy),
        ("MCC", mcc(p, present)),
        ("MaximumProbability", p.iter().flatten().fold(0.0f64, |m, v| m.max(*v))),
        ("SumAverage", (0..psum.len()).map(|k| k as f64 * psum[k]).sum()),
        ("SumEntropy", ent(&psum)),
        ("SumSquares", (0..ng).map(|i| (g(i) - mux).powi(2) * px[i]).sum()),
    ]
}

fn glcm(lv: &Levels, out: &mut BTreeMap<String, f64>) {
    let present = {
        let mut s: Vec<usize> = lv.list.iter().map(|v| v.1).collect();
        s.sort();
        s.dedup();
        s.len()
    };
    let mut acc: BTreeMap<&str, f64> = BTreeMap::new();
    let mut used = 0.0;
    for d in DIRECTIONS {
        let mut m = vec![vec![0.0; lv.ng]; lv.ng];
        let mut total = 0.0;
        for (a, la) in &lv.list {
            for (b, lb) in &lv.list {
                if sub(*b, *a) == d {
                    m[la - 1][lb - 1] += 1.0;
                    m[lb - 1][la - 1] += 1.0;
                    total += 2.0;
                }
            }
        }
        if total == 0.0 {
            continue;
        }
        let p: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|c| c / total).collect()).collect();
        for (k, v) in glcm_direction(&p, present) {
            *acc.entry(k).or_default() += v;
        }
        used += 1.0;
    }
    for (k, v) in acc {
        out.insert(format!("original_glcm_{k}"), v / used);
    }
}

/// Shared size-matrix statistics; `p[(level, size)] = count`.
fn size_stats(mat: &BTreeMap<(usize, usize), f64>) -> BTreeMap<&'static str, f64> {
    let nz: f64 = mat.values().sum();
    let mut gl: BTreeMap<usize, f64> = BTreeMap::new();
    let mut sz: BTreeMap<usize, f64> = BTreeMap::new();
    for (&(i, j), &c) in mat {
        *gl.entry(i).or_default() += c;
        *sz.entry(j).or_default() += c;
    }
    let e = |f: &dyn Fn(f64, f64) -> f64| mat.iter().map(|(&(i, j), &c)| c * f(i as f64, j as f64)).sum::<f64>() / nz;
    let mu_i = e(&|i, _| i);
    let mu_j = e(&|_, j| j);
    let mut s = BTreeMap::new();
    s.insert("small", e(&|_, j| 1.0 / (j * j)));
    s.insert("large", e(&|_, j| j * j));
    s.insert("low", e(&|i, _| 1.0 / (i * i)));
    s.insert("high", e(&|i, _| i * i));
    s.insert("small_low", e(&|i, j| 1.0 / (i * i * j * j)));
    s.insert("small_high", e(&|i, j| i * i / (j * j)));
    s.insert("large_low", e(&|i, j| j * j / (i * i)));
    s.insert("large_high", e(&|i, j| i * i * j * j));
    s.insert("gv", e(&|i, _| (i - mu_i).powi(2)));
    s.insert("sv", e(&|_, j| (j - mu_j).powi(2)));
    s.insert("ent", mat.values().map(|c| -(c / nz) * log2(c / nz)).sum());
    s.insert("gn", gl.values().map(|c| c * c).sum::<f64>() / nz);
    s.insert("gnn", gl.values().map(|c| c * c).sum::<f64>() / (nz * nz));
    s.insert("sn", sz.values().map(|c| c * c).sum::<f64>() / nz);
    s.insert("snn", sz.values().map(|c| c * c).sum::<f64>() / (nz * nz));
    s.insert("n", nz);
    s
}

fn glrlm(lv: &Levels, out: &mut BTreeMap<String, f64>) {
    let np = lv.list.len() as f64;
    let mut acc: BTreeMap<&str, f64> = BTreeMap::new();
    for d in DIRECTIONS {
        let mut mat = BTreeMap::new();
        for (c, l) in &lv.list {
            if lv.at.get(&sub(*c, d)) == Some(l) {
                continue;
            }
            let mut len = 1;
            let mut cur = add(*c, d);
            while lv.at.get(&cur) == Some(l) {
                len += 1;
                cur = add(cur, d);
            }
            *mat.entry((*l, len)).or_insert(0.0) += 1.0;
        }
        let s = size_stats(&mat);
        for (k, v) in [
            ("GrayLevelNonUniformity", s["gn"]),
            ("GrayLevelNonUniformityNormalized", s["gnn"]),
            ("GrayLevelVariance", s["gv"]),
            ("HighGrayLevelRunEmphasis", s["high"]),
            ("LongRunEmphasis", s["large"]),
            ("LongRunHighGrayLevelEmphasis", s["large_high"]),
            ("LongRunLowGrayLevelEmphasis", s["large_low"]),
            ("LowGrayLevelRunEmphasis", s["low"]),
            ("RunEntropy", s["ent"]),
            ("RunLengthNonUniformity", s["sn"]),
            ("RunLengthNonUniformityNormalized", s["snn"]),
            ("RunPercentage", s["n"] / np),
            ("RunVariance", s["sv"]),
            ("ShortRunEmphasis", s["small"]),
            ("ShortRunHighGrayLevelEmphasis", s["small_high"]),
            ("ShortRunLowGrayLevelEmphasis", s["small_low"]),
        ] {
            *acc.entry(k).or_default() += v / 13.0;
        }
    }
    for (k, v) in acc {
        out.insert(format!("original_glrlm_{k}"), v);
    }
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    parent[x] = r;
    r
}

fn glszm(lv: &Levels, out: &mut BTreeMap<String, f64>) {
    let n = lv.list.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for a in 0..n {
        for b in a + 1..n {
            if lv.list[a].1 == lv.list[b].1 && chebyshev1(lv.list[a].0, lv.list[b].0) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
    }
    let mut zones: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for a in 0..n {
        let r = find(&mut parent, a);
        let e = zones.entry(r).or_insert((lv.list[a].1, 0));
        e.1 += 1;
    }
    let mut mat = BTreeMap::new();
    for (l, size) in zones.values() {
        *mat.entry((*l, *size)).or_insert(0.0) += 1.0;
    }
    let s = size_stats(&mat);
    for (k, v) in [
        ("GrayLevelNonUniformity", s["gn"]),
        ("GrayLevelNonUniformityNormalized", s["gnn"]),
        ("GrayLevelVariance", s["gv"]),
        ("HighGrayLevelZoneEmphasis", s["high"]),
        ("LargeAreaEmphasis", s["large"]),
        ("LargeAreaHighGrayLevelEmphasis", s["large_high"]),
        ("LargeAreaLowGrayLevelEmphasis", s["large_low"]),
        ("LowGrayLevelZoneEmphasis", s["low"]),
        ("SizeZoneNonUniformity", s["sn"]),
        ("SizeZoneNonUniformityNormalized", s["snn"]),
        ("SmallAreaEmphasis", s["small"]),
        ("SmallAreaHighGrayLevelEmphasis", s["small_high"]),
        ("SmallAreaLowGrayLevelEmphasis", s["small_low"]),
        ("ZoneEntropy", s["ent"]),
        ("ZonePercentage", s["n"] / n as f64),
        ("ZoneVariance", s["sv"]),
    ] {
        out.insert(format!("original_glszm_{k}"), v);
    }
}

fn gldm(lv: &Levels, out: &mut BTreeMap<String, f64>) {
    let mut mat = BTreeMap::new();
    for (a, la) in &lv.list {
        let dep = lv.list.iter().filter(|(b, lb)| lb == la && chebyshev1(*a, *b)).count() + 1;
        *mat.entry((*la, dep)).or_insert(0.0) += 1.0;
    }
    let s = size_stats(&mat);
    for (k, v) in [
        ("DependenceEntropy", s["ent"]),
        ("DependenceNonUniformity", s["sn"]),
        ("DependenceNonUniformityNormalized", s["snn"]),
        ("DependenceVariance", s["sv"]),
        ("GrayLevelNonUniformity", s["gn"]),
        ("GrayLevelVariance", s["gv"]),
        ("HighGrayLevelEmphasis", s["high"]),
        ("LargeDependenceEmphasis", s["large"]),
        ("LargeDependenceHighGrayLevelEmphasis", s["large_high"]),
        ("LargeDependenceLowGrayLevelEmphasis", s["large_low"]),
        ("LowGrayLevelEmphasis", s["low"]),
        ("SmallDependenceEmphasis", s["small"]),
        ("SmallDependenceHighGrayLevelEmphasis", s["small_high"]),
        ("SmallDependenceLowGrayLevelEmphasis", s["small_low"]),
    ] {
        out.insert(format!("original_gldm_{k}"), v);
    }
}

fn ngtdm(lv: &Levels, out: &mut BTreeMap<String, f64>) {
    let mut n = vec![0.0; lv.ng + 1];
    let mut s = vec![0.0; lv.ng + 1];
    for (a, la) in &lv.list {
        let nb: Vec<f64> = lv.list.iter().filter(|(b, _)| chebyshev1(*a, *b)).map(|(_, l)| *l as f64).collect();
        if nb.is_empty() {
            continue;
        }
        let avg = nb.iter().sum::<f64>() / nb.len() as f64;
        n[*la] += 1.0;
        s[*la] += (*la as f64 - avg).abs();
    }
    let nvp: f64 = n.iter().sum();
    let lv_present: Vec<usize> = (1..=lv.ng).filter(|&i| n[i] > 0.0).collect();
    let p = |i: usize| n[i] / nvp;
    let ngp = lv_present.len() as f64;
    let ps: f64 = lv_present.iter().map(|&i| p(i) * s[i]).sum();
    let ssum: f64 = lv_present.iter().map(|&i| s[i]).sum();
    let double = |f: &dyn Fn(usize, usize) -> f64| -> f64 {
        lv_present.iter().flat_map(|&i| lv_present.iter().map(move |&j| (i, j))).map(|(i, j)| f(i, j)).sum()
    };
    let sq = |i: usize, j: usize| (i as f64 - j as f64).powi(2);
    let busy_den = double(&|i, j| (i as f64 * p(i) - j as f64 * p(j)).abs());
    let mut put = |k: &str, v: f64| {
        out.insert(format!("original_ngtdm_{k}"), v);
    };
    put("Busyness", if busy_den == 0.0 { 0.0 } else { ps / busy_den });
    put("Coarseness", if ps == 0.0 { 1e6 } else { 1.0 / ps });
    put("Complexity", double(&|i, j| (i as f64 - j as f64).abs() * (p(i) * s[i] + p(j) * s[j]) / (p(i) + p(j))) / nvp);
    put("Contrast", if ngp > 1.0 { double(&|i, j| p(i) * p(j) * sq(i, j)) / (ngp * (ngp - 1.0)) * ssum / nvp } else { 0.0 });
    put("Strength", if ssum == 0.0 { 0.0 } else { double(&|i, j| (p(i) + p(j)) * sq(i, j)) / ssum });
}

/// All 93 features keyed by full name.
pub fn features(roi: &Roi) -> BTreeMap<String, f64> {
    let lv = discretize(roi);
    let mut out = BTreeMap::new();
    first_order(roi, &lv, &mut out);
    glcm(&lv, &mut out);
    glrlm(&lv, &mut out);
    glszm(&lv, &mut out);
    gldm(&lv, &mut out);
    ngtdm(&lv, &mut out);
    out
}
