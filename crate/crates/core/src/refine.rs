//! TP/FP reclassification with a class-weighted, L1-penalized logistic regression.
//!
//! The objective minimized by [`train_lr`] is
//!
//! ```text
//! Σ_i cw(y_i) · log(1 + exp(-ỹ_i (w·x_i + b))) + λ ‖w‖₁,   ỹ ∈ {-1, +1}
//! ```
//!
//! with an unpenalized bias. It is solved by cyclic coordinate descent: each
//! coordinate takes the exact minimizer of the L1-regularized quadratic model
//! of the loss, then backtracks until a sufficient-decrease condition holds, so
//! the objective never increases.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::MatchResult;
use crate::radiomics::{FeatureVector, Group};

/// Per-feature standardization fitted on the training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; 0 for dropped columns.
    pub std: Vec<f64>,
    /// Zero-variance columns, transformed to 0.
    pub dropped: Vec<usize>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::validation("standardizer needs at least two rows"));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::validation("feature rows have different lengths"));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut std = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                std[j] += (r[j] - mean[j]).powi(2);
            }
        }
        let mut dropped = Vec::new();
        for j in 0..d {
            std[j] = (std[j] / n).sqrt();
            if !(std[j] > 1e-12 * mean[j].abs().max(1.0)) {
                std[j] = 0.0;
                dropped.push(j);
            }
        }
        if !dropped.is_empty() {
            log::warn!("standardizer: dropping {} zero-variance feature(s)", dropped.len());
        }
        Ok(Standardizer { mean, std, dropped })
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.mean.len() {
            return Err(Error::validation(format!(
                "feature vector has {} values, model expects {}",
                row.len(),
                self.mean.len()
            )));
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, v)| if self.std[j] > 0.0 { (v - self.mean[j]) / self.std[j] } else { 0.0 })
            .collect())
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }
}

/// Sample weights per class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassWeights {
    pub tp: f64,
    pub fp: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        ClassWeights { tp: 0.29, fp: 0.71 }
    }
}

impl ClassWeights {
    fn of(&self, is_tp: bool) -> f64 {
        if is_tp {
            self.tp
        } else {
            self.fp
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrConfig {
    pub lambda: f64,
    pub class_weights: ClassWeights,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LrConfig {
    fn default() -> Self {
        LrConfig { lambda: 1.0, class_weights: ClassWeights::default(), max_iter: 10_000, tol: 1e-6 }
    }
}

/// Result of coordinate descent on already standardized data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    /// Objective after each full sweep.
    pub objective_trace: Vec<f64>,
}

/// `log(1 + exp(m))` without overflow.
#[inline]
fn softplus(m: f64) -> f64 {
    if m > 0.0 {
        m + (-m).exp().ln_1p()
    } else {
        m.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Value of the training objective at `(w, b)`.
pub fn lr_objective(x: &[Vec<f64>], y: &[bool], w: &[f64], b: f64, lambda: f64, cw: ClassWeights) -> f64 {
    let loss: f64 = x
        .iter()
        .zip(y)
        .map(|(row, &t)| {
            let z: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
            let sign = if t { 1.0 } else { -1.0 };
            cw.of(t) * softplus(-sign * z)
        })
        .sum();
    loss + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
}

/// Minimizes `g·d + h/2·d² + λ|w + d|` over `d`.
fn l1_newton_step(w: f64, g: f64, h: f64, lambda: f64) -> f64 {
    if g + lambda <= h * w {
        -(g + lambda) / h
    } else if g - lambda >= h * w {
        -(g - lambda) / h
    } else {
        -w
    }
}

/// Cyclic coordinate descent, features in ascending index order, then the bias.
///
/// `skip` lists coordinates held at zero (e.g. dropped features).
pub fn train_lr(x: &[Vec<f64>], y: &[bool], cfg: &LrConfig, skip: &[usize]) -> Result<LrFit> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::validation("training matrix and labels must be non-empty and equally long"));
    }
    if !y.iter().any(|t| *t) || y.iter().all(|t| *t) {
        return Err(Error::validation("training labels must contain both TP and FP examples"));
    }
    if !(cfg.lambda >= 0.0) || !(cfg.class_weights.tp > 0.0) || !(cfg.class_weights.fp > 0.0) {
        return Err(Error::validation("lambda must be >= 0 and class weights > 0"));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::validation("feature rows have different lengths"));
    }
    let n = x.len();
    let c: Vec<f64> = y.iter().map(|t| cfg.class_weights.of(*t)).collect();
    let sgn: Vec<f64> = y.iter().map(|t| if *t { 1.0 } else { -1.0 }).collect();
    let active: Vec<usize> = (0..d).filter(|j| !skip.contains(j)).collect();

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut z = vec![0.0; n];
    let loss_at = |z: &[f64], shift: f64, col: &dyn Fn(usize) -> f64| -> f64 {
        (0..n).map(|i| c[i] * softplus(-sgn[i] * (z[i] + shift * col(i)))).sum()
    };

    const SIGMA: f64 = 0.01;
    const MAX_BACKTRACK: usize = 60;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut current = lr_objective(x, y, &w, b, cfg.lambda, cfg.class_weights);

    for _ in 0..cfg.max_iter {
        iterations += 1;
        let mut max_step = 0.0f64;
        // coordinates: active features, then bias (usize::MAX)
        for coord in active.iter().copied().chain(std::iter::once(usize::MAX)) {
            let col = |i: usize| if coord == usize::MAX { 1.0 } else { x[i][coord] };
            let (mut g, mut h) = (0.0, 0.0);
            for i in 0..n {
                let p = sigmoid(z[i]);
                let t = if sgn[i] > 0.0 { 1.0 } else { 0.0 };
                let xi = col(i);
                g += c[i] * (p - t) * xi;
                h += c[i] * p * (1.0 - p) * xi * xi;
            }
            h = h.max(1e-12);
            let (wj, lam) = if coord == usize::MAX { (b, 0.0) } else { (w[coord], cfg.lambda) };
            let dir = l1_newton_step(wj, g, h, lam);
            if dir == 0.0 {
                continue;
            }
            let base = loss_at(&z, 0.0, &col) + lam * wj.abs();
            let delta = g * dir + lam * ((wj + dir).abs() - wj.abs());
            let mut beta = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACK {
                let step = beta * dir;
                let trial = loss_at(&z, step, &col) + lam * (wj + step).abs();
                if trial - base <= SIGMA * beta * delta {
                    accepted = Some(step);
                    break;
                }
                beta *= 0.5;
            }
            let Some(step) = accepted else { continue };
            for i in 0..n {
                z[i] += step * col(i);
            }
            if coord == usize::MAX {
                b += step;
            } else {
                w[coord] += step;
            }
            max_step = max_step.max(step.abs());
        }
        let obj = lr_objective(x, y, &w, b, cfg.lambda, cfg.class_weights);
        debug_assert!(obj <= current + 1e-10 * current.abs().max(1.0), "objective increased: {current} -> {obj}");
        current = obj;
        trace.push(obj);
        if max_step < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("L1 logistic regression did not converge in {} sweeps", cfg.max_iter);
    }
    Ok(LrFit { weights: w, bias: b, iterations, converged, objective: current, objective_trace: trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
    pub n_train: usize,
    pub n_tp: usize,
    pub n_fp: usize,
}

/// Standardizer plus logistic weights; serialized as the model JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    pub feature_names: Vec<String>,
    pub standardizer: Standardizer,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub class_weights: ClassWeights,
    pub threshold: f64,
    pub dropped_features: Vec<String>,
    pub training: TrainingMeta,
}

impl LrModel {
    /// Standardizes raw feature rows and fits the regression. `y` is `true` for TP.
    pub fn fit(feature_names: Vec<String>, rows: &[Vec<f64>], y: &[bool], cfg: &LrConfig, threshold: f64) -> Result<Self> {
        let standardizer = Standardizer::fit(rows)?;
        let xs = standardizer.transform(rows)?;
        let fit = train_lr(&xs, y, cfg, &standardizer.dropped)?;
        let dropped_features = standardizer
            .dropped
            .iter()
            .map(|&j| feature_names.get(j).cloned().unwrap_or_else(|| format!("#{j}")))
            .collect();
        Ok(LrModel {
            feature_names,
            standardizer,
            weights: fit.weights,
            bias: fit.bias,
            lambda: cfg.lambda,
            class_weights: cfg.class_weights,
            threshold,
            dropped_features,
            training: TrainingMeta {
                iterations: fit.iterations,
                converged: fit.converged,
                final_objective: fit.objective,
                n_train: rows.len(),
                n_tp: y.iter().filter(|t| **t).count(),
                n_fp: y.iter().filter(|t| !**t).count(),
            },
        })
    }

    /// Model with identity standardization, for hand-built weights.
    pub fn from_weights(weights: Vec<f64>, bias: f64, threshold: f64) -> Self {
        let d = weights.len();
        LrModel {
            feature_names: (0..d).map(|j| format!("f{j}")).collect(),
            standardizer: Standardizer { mean: vec![0.0; d], std: vec![1.0; d], dropped: Vec::new() },
            weights,
            bias,
            lambda: 0.0,
            class_weights: ClassWeights::default(),
            threshold,
            dropped_features: Vec::new(),
            training: TrainingMeta { iterations: 0, converged: true, final_objective: 0.0, n_train: 0, n_tp: 0, n_fp: 0 },
        }
    }

    /// TP probability of a raw feature vector, strictly inside `(0, 1)`.
    pub fn predict_proba(&self, raw: &[f64]) -> Result<f64> {
        let x = self.standardizer.transform_row(raw)?;
        let z: f64 = x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.bias;
        Ok(sigmoid(z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
    }

    pub fn nonzero_weights(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Json { path: path.into(), source: e })?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json { path: path.into(), source: e })
    }
}

/// Weights divided by the largest absolute weight; signs preserved.
pub fn feature_importance(model: &LrModel) -> Result<Vec<f64>> {
    let max = model.weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if max == 0.0 {
        return Err(Error::validation("all model weights are zero; importance is undefined"));
    }
    Ok(model.weights.iter().map(|w| w / max).collect())
}

/// Keep/reject decision for one predicted lesion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionDecision {
    pub patient: String,
    pub lesion_id: u32,
    pub group: Group,
    /// `None` when features were unavailable (lesion kept).
    pub proba: Option<f64>,
    pub kept: bool,
}

/// Confusion counts after refinement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedConfusion {
    pub kept_tp: usize,
    pub kept_fp: usize,
    pub rejected_tp: usize,
    pub rejected_fp: usize,
    pub original_fn: usize,
    /// Lesions kept without a decision because their features were missing.
    pub excluded: usize,
}

impl RefinedConfusion {
    pub fn from_decisions(decisions: &[LesionDecision], original_fn: usize) -> Self {
        let mut c = RefinedConfusion { original_fn, ..Default::default() };
        for d in decisions {
            match (d.group, d.kept) {
                (Group::TP, true) => c.kept_tp += 1,
                (Group::TP, false) => c.rejected_tp += 1,
                (Group::FP, true) => c.kept_fp += 1,
                (Group::FP, false) => c.rejected_fp += 1,
            }
            if d.proba.is_none() {
                c.excluded += 1;
            }
        }
        c
    }

    pub fn n_tp(&self) -> usize {
        self.kept_tp
    }

    pub fn n_fp(&self) -> usize {
        self.kept_fp
    }

    pub fn n_fn(&self) -> usize {
        self.original_fn + self.rejected_tp
    }

    pub fn original_counts(&self) -> (usize, usize, usize) {
        (self.kept_tp + self.rejected_tp, self.kept_fp + self.rejected_fp, self.original_fn)
    }

    pub fn merge(&mut self, other: &RefinedConfusion) {
        self.kept_tp += other.kept_tp;
        self.kept_fp += other.kept_fp;
        self.rejected_tp += other.rejected_tp;
        self.rejected_fp += other.rejected_fp;
        self.original_fn += other.original_fn;
        self.excluded += other.excluded;
    }
}

/// Applies the model to every predicted lesion of one case.
///
/// A lesion is kept iff its TP probability is at least `threshold`. Lesions
/// without a feature vector are kept unchanged.
pub fn refine_predictions(
    patient: &str,
    matched: &MatchResult,
    features: &BTreeMap<u32, FeatureVector>,
    model: Option<&LrModel>,
    threshold: f64,
) -> Result<(RefinedConfusion, Vec<LesionDecision>)> {
    let model = model.ok_or_else(|| Error::validation("refinement requires a trained model"))?;
    let mut lesions: Vec<(u32, Group)> = matched
        .tp
        .iter()
        .map(|(id, _)| (*id, Group::TP))
        .chain(matched.fp.iter().map(|id| (*id, Group::FP)))
        .collect();
    lesions.sort_by_key(|l| l.0);
    let mut decisions = Vec::with_capacity(lesions.len());
    for (id, group) in lesions {
        let proba = match features.get(&id) {
            Some(fv) => Some(model.predict_proba(&fv.values)?),
            None => None,
        };
        let kept = proba.is_none_or(|p| p >= threshold);
        decisions.push(LesionDecision { patient: patient.to_string(), lesion_id: id, group, proba, kept });
    }
    let excluded = decisions.iter().filter(|d| d.proba.is_none()).count();
    if excluded > 0 {
        log::warn!("{patient}: {excluded} lesion(s) without features kept unrefined");
    }
    Ok((RefinedConfusion::from_decisions(&decisions, matched.n_fn()), decisions))
}
