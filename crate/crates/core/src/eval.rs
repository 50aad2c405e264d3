//! Detection metrics, bootstrap intervals and cohort comparisons.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::radiomics::Group;
use crate::refine::LesionDecision;

pub fn f1(tp: usize, fp: usize, fn_: usize) -> Result<f64> {
    let den = 2 * tp + fp + fn_;
    if den == 0 {
        return Err(Error::UndefinedMetric("F1 with tp = fp = fn = 0".into()));
    }
    Ok(2.0 * tp as f64 / den as f64)
}

pub fn ppv(tp: usize, fp: usize) -> Result<f64> {
    if tp + fp == 0 {
        return Err(Error::UndefinedMetric("PPV with no predictions".into()));
    }
    Ok(tp as f64 / (tp + fp) as f64)
}

/// Outcome of one lesion after (optional) refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Tp { kept: bool },
    Fp { kept: bool },
    Fn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LesionRecord {
    pub patient: String,
    pub outcome: Outcome,
}

impl LesionRecord {
    pub fn new(patient: impl Into<String>, outcome: Outcome) -> Self {
        LesionRecord { patient: patient.into(), outcome }
    }
}

/// Records for a set of refinement decisions plus the original misses.
pub fn records_from_decisions(decisions: &[LesionDecision], misses: &[(String, usize)], refined: bool) -> Vec<LesionRecord> {
    let mut out: Vec<LesionRecord> = decisions
        .iter()
        .map(|d| {
            let kept = !refined || d.kept;
            let outcome = match d.group {
                Group::TP => Outcome::Tp { kept },
                Group::FP => Outcome::Fp { kept },
            };
            LesionRecord::new(d.patient.clone(), outcome)
        })
        .collect();
    for (patient, n) in misses {
        out.extend((0..*n).map(|_| LesionRecord::new(patient.clone(), Outcome::Fn)));
    }
    out
}

/// `(tp, fp, fn)` with rejected TPs counted as misses and rejected FPs dropped.
pub fn counts<'a>(records: impl IntoIterator<Item = &'a LesionRecord>) -> (usize, usize, usize) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for r in records {
        match r.outcome {
            Outcome::Tp { kept: true } => tp += 1,
            Outcome::Tp { kept: false } | Outcome::Fn => fn_ += 1,
            Outcome::Fp { kept: true } => fp += 1,
            Outcome::Fp { kept: false } => {}
        }
    }
    (tp, fp, fn_)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleUnit {
    #[default]
    Lesion,
    Patient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub b: usize,
    pub alpha: f64,
    pub seed: u64,
    pub unit: ResampleUnit,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { b: 1000, alpha: 0.05, seed: 0, unit: ResampleUnit::Lesion }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Resamples where the metric was undefined.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub f1: Interval,
    pub ppv: Interval,
    pub b: usize,
    pub alpha: f64,
    pub seed: u64,
    pub unit: ResampleUnit,
}

/// Index of the `q`-quantile in a sorted list of length `m`: `ceil(q·m) − 1`.
fn order_index(q: f64, m: usize) -> usize {
    ((q * m as f64).ceil() as usize).clamp(1, m) - 1
}

/// Mean and percentile interval of a metric sample. Bounds are order statistics.
pub fn percentile_ci(values: &[f64], alpha: f64) -> Result<(f64, f64, f64)> {
    if values.is_empty() {
        return Err(Error::UndefinedMetric("no defined resamples".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let mean = sorted.iter().sum::<f64>() / m as f64;
    let lo = sorted[order_index(alpha / 2.0, m)];
    let hi = sorted[order_index(1.0 - alpha / 2.0, m)];
    // guards against mean drifting out of [lo, hi] by rounding when lo == hi
    Ok((mean.clamp(lo, hi), lo, hi))
}

fn interval(values: Vec<Option<f64>>, alpha: f64) -> Result<Interval> {
    let skipped = values.iter().filter(|v| v.is_none()).count();
    let defined: Vec<f64> = values.into_iter().flatten().collect();
    let (mean, ci_low, ci_high) = percentile_ci(&defined, alpha)?;
    Ok(Interval { mean, ci_low, ci_high, skipped })
}

fn summarize(samples: Vec<(usize, usize, usize)>, cfg: &BootstrapConfig) -> Result<BootstrapSummary> {
    let f1s = samples.iter().map(|&(tp, fp, fn_)| f1(tp, fp, fn_).ok()).collect();
    let ppvs = samples.iter().map(|&(tp, fp, _)| ppv(tp, fp).ok()).collect();
    Ok(BootstrapSummary {
        f1: interval(f1s, cfg.alpha)?,
        ppv: interval(ppvs, cfg.alpha)?,
        b: cfg.b,
        alpha: cfg.alpha,
        seed: cfg.seed,
        unit: cfg.unit,
    })
}

/// Nonparametric bootstrap of F1 and PPV.
///
/// Resample `k` uses its own ChaCha stream (`seed`, stream `k`), so results do
/// not depend on the number of worker threads.
pub fn bootstrap_ci(records: &[LesionRecord], cfg: &BootstrapConfig) -> Result<BootstrapSummary> {
    if records.is_empty() {
        return Err(Error::validation("bootstrap needs at least one record"));
    }
    if cfg.b == 0 || !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::validation("bootstrap needs B >= 1 and alpha in (0, 1)"));
    }
    let units: Vec<Vec<&LesionRecord>> = match cfg.unit {
        ResampleUnit::Lesion => records.iter().map(|r| vec![r]).collect(),
        ResampleUnit::Patient => {
            let mut by: std::collections::BTreeMap<&str, Vec<&LesionRecord>> = Default::default();
            for r in records {
                by.entry(r.patient.as_str()).or_default().push(r);
            }
            by.into_values().collect()
        }
    };
    let n = units.len();
    let samples: Vec<(usize, usize, usize)> = (0..cfg.b)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for _ in 0..n {
                let (a, b, c) = counts(units[rng.random_range(0..n)].iter().copied());
                tp += a;
                fp += b;
                fn_ += c;
            }
            (tp, fp, fn_)
        })
        .collect();
    summarize(samples, cfg)
}

/// Bootstrap over all `n^n` ordered resamples. Only for tiny inputs (n ≤ 7).
pub fn bootstrap_exhaustive(records: &[LesionRecord], alpha: f64) -> Result<BootstrapSummary> {
    let n = records.len();
    if n == 0 || n > 7 {
        return Err(Error::validation("exhaustive bootstrap supports 1..=7 records"));
    }
    let total = n.pow(n as u32);
    let samples = (0..total)
        .map(|mut code| {
            let picks: Vec<&LesionRecord> = (0..n)
                .map(|_| {
                    let r = &records[code % n];
                    code /= n;
                    r
                })
                .collect();
            counts(picks)
        })
        .collect();
    summarize(samples, &BootstrapConfig { b: total, alpha, seed: 0, unit: ResampleUnit::Lesion })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_tp: usize,
    pub n_fp: usize,
    pub n_fn: usize,
    pub f1: f64,
    pub ppv: f64,
    pub bootstrap: Option<BootstrapSummary>,
}

impl MetricReport {
    pub fn from_counts(n_tp: usize, n_fp: usize, n_fn: usize) -> Result<Self> {
        Ok(MetricReport { n_tp, n_fp, n_fn, f1: f1(n_tp, n_fp, n_fn)?, ppv: ppv(n_tp, n_fp)?, bootstrap: None })
    }

    pub fn from_records(records: &[LesionRecord], bootstrap: Option<&BootstrapConfig>) -> Result<Self> {
        let (tp, fp, fn_) = counts(records);
        let mut report = Self::from_counts(tp, fp, fn_)?;
        if let Some(cfg) = bootstrap {
            report.bootstrap = Some(bootstrap_ci(records, cfg)?);
        }
        Ok(report)
    }
}

/// Plain-text table with one row per method.
pub fn render_table(rows: &[(&str, &MetricReport)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<20} {:>6} {:>6} {:>6}  {:<26} {:<26}", "Method", "TP", "FP", "FN", "F1 score", "PPV");
    for (name, r) in rows {
        let fmt = |v: f64, iv: Option<&Interval>| match iv {
            Some(i) => format!("{v:.4} [{:.4}, {:.4}]", i.ci_low, i.ci_high),
            None => format!("{v:.4}"),
        };
        let b = r.bootstrap.as_ref();
        let _ = writeln!(
            s,
            "{:<20} {:>6} {:>6} {:>6}  {:<26} {:<26}",
            name,
            r.n_tp,
            r.n_fp,
            r.n_fn,
            fmt(r.f1, b.map(|b| &b.f1)),
            fmt(r.ppv, b.map(|b| &b.ppv))
        );
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MwMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    pub u_a: f64,
    pub u_b: f64,
    pub p: f64,
    pub method: MwMethod,
}

/// Largest pooled size for which the exact distribution is used.
pub const EXACT_MAX_N: usize = 12;

/// Midranks (1-based) of `values`, ties averaged.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Mann-Whitney U test; exact when `n_a + n_b ≤ 12`.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    let method = if a.len() + b.len() <= EXACT_MAX_N { MwMethod::Exact } else { MwMethod::Normal };
    mann_whitney_u_with(a, b, method)
}

pub fn mann_whitney_u_with(a: &[f64], b: &[f64], method: MwMethod) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::validation("Mann-Whitney needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::validation("Mann-Whitney samples must be finite"));
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let ra: f64 = ranks[..na].iter().sum();
    let u_a = ra - (na * (na + 1)) as f64 / 2.0;
    let u_b = (na * nb) as f64 - u_a;
    let mu = (na * nb) as f64 / 2.0;
    let p = match method {
        MwMethod::Exact => {
            if na + nb > 20 {
                return Err(Error::validation("exact Mann-Whitney limited to 20 pooled values"));
            }
            let has_ties = {
                let mut s = pooled.clone();
                s.sort_by(f64::total_cmp);
                s.windows(2).any(|w| w[0] == w[1])
            };
            if has_ties {
                exact_p_enumerate(&ranks, na, u_a, mu)
            } else {
                exact_p_no_ties(na, nb, u_a, mu)
            }
        }
        MwMethod::Normal => normal_p(&pooled, na, nb, u_a, mu),
    };
    Ok(MannWhitney { u_a, u_b, p, method })
}

/// Tolerance for comparing half-integer U deviations.
const U_EPS: f64 = 1e-9;

/// Null distribution of U by the counting recurrence over (n_a, n_b).
fn exact_p_no_ties(na: usize, nb: usize, u_obs: f64, mu: f64) -> f64 {
    let max_u = na * nb;
    // f[i][j][u] = number of arrangements of i a's and j b's with U = u
    let mut f = vec![vec![vec![0f64; max_u + 1]; nb + 1]; na + 1];
    for j in 0..=nb {
        f[0][j][0] = 1.0;
    }
    for i in 1..=na {
        f[i][0][0] = 1.0;
        for j in 1..=nb {
            for u in 0..=i * j {
                // largest element is an a (beats all j b's) or a b
                let from_a = if u >= j { f[i - 1][j][u - j] } else { 0.0 };
                let from_b = f[i][j - 1][u];
                f[i][j][u] = from_a + from_b;
            }
        }
    }
    let dist = &f[na][nb];
    let total: f64 = dist.iter().sum();
    let dev = (u_obs - mu).abs();
    let hits: f64 = dist
        .iter()
        .enumerate()
        .filter(|(u, _)| (*u as f64 - mu).abs() >= dev - U_EPS)
        .map(|(_, c)| c)
        .sum();
    hits / total
}

/// Null distribution by enumerating every assignment of the pooled midranks.
fn exact_p_enumerate(ranks: &[f64], na: usize, u_obs: f64, mu: f64) -> f64 {
    let n = ranks.len();
    let dev = (u_obs - mu).abs();
    let offset = (na * (na + 1)) as f64 / 2.0;
    let (mut hits, mut total) = (0u64, 0u64);
    for m in 0u32..(1u32 << n) {
        if m.count_ones() as usize != na {
            continue;
        }
        let r: f64 = (0..n).filter(|i| m >> i & 1 == 1).map(|i| ranks[i]).sum();
        total += 1;
        if (r - offset - mu).abs() >= dev - U_EPS {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

fn normal_p(pooled: &[f64], na: usize, nb: usize, u_a: f64, mu: f64) -> f64 {
    let n = (na + nb) as f64;
    let mut sorted = pooled.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let (na, nb) = (na as f64, nb as f64);
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if !(var > 0.0) {
        return 1.0;
    }
    let z = ((u_a - mu).abs() - 0.5).max(0.0) / var.sqrt();
    let std = Normal::standard();
    (2.0 * (1.0 - std.cdf(z))).min(1.0)
}

/// Per-lesion summary of a saliency map inside its ROI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapStats {
    pub group: Group,
    pub mean: f64,
    pub max: f64,
    pub min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Mean,
    Max,
    Min,
}

impl Statistic {
    pub const ALL: [Statistic; 3] = [Statistic::Mean, Statistic::Max, Statistic::Min];

    fn of(&self, s: &MapStats) -> f64 {
        match self {
            Statistic::Mean => s.mean,
            Statistic::Max => s.max,
            Statistic::Min => s.min,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl CohortSummary {
    fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        CohortSummary { n, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftComparison {
    pub group: Group,
    pub statistic: Statistic,
    pub train: CohortSummary,
    pub test: CohortSummary,
    pub u: f64,
    /// `None` when either cohort has fewer than two lesions.
    pub p: Option<f64>,
    /// Each cohort mean lies within one std of the other.
    pub within_one_std: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub comparisons: Vec<ShiftComparison>,
    pub warnings: Vec<String>,
}

pub fn domain_shift_report(train: &[MapStats], test: &[MapStats]) -> Result<ShiftReport> {
    let mut comparisons = Vec::new();
    let mut warnings = Vec::new();
    for group in [Group::TP, Group::FP] {
        let tr: Vec<&MapStats> = train.iter().filter(|s| s.group == group).collect();
        let te: Vec<&MapStats> = test.iter().filter(|s| s.group == group).collect();
        if tr.is_empty() || te.is_empty() {
            let msg = format!("group {group} missing from {} cohort", if tr.is_empty() { "train" } else { "test" });
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        for stat in Statistic::ALL {
            let a: Vec<f64> = tr.iter().map(|s| stat.of(s)).collect();
            let b: Vec<f64> = te.iter().map(|s| stat.of(s)).collect();
            let mw = mann_whitney_u(&a, &b)?;
            let (train, test) = (CohortSummary::of(&a), CohortSummary::of(&b));
            let diff = (train.mean - test.mean).abs();
            let within_one_std = diff <= train.std && diff <= test.std;
            let p = (a.len() >= 2 && b.len() >= 2).then_some(mw.p);
            if p.is_none() {
                warnings.push(format!("group {group} {stat:?}: cohort with n = 1, no p-value"));
            }
            comparisons.push(ShiftComparison { group, statistic: stat, train, test, u: mw.u_a, p, within_one_std });
        }
    }
    if comparisons.is_empty() {
        return Err(Error::validation("no group present in both cohorts"));
    }
    Ok(ShiftReport { comparisons, warnings })
}
