//! Pipeline stages. Each stage reads the artifacts of earlier stages from disk
//! and writes its own outputs plus a manifest under the output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use salref_core::eval::{domain_shift_report, records_from_decisions, render_table, BootstrapConfig, MapStats, MetricReport, ShiftReport};
use salref_core::instances::{connected_components, Connectivity, LesionInstance};
use salref_core::radiomics::feature_names_for;
use salref_core::refine::{feature_importance, LesionDecision, LrModel, RefinedConfusion};
use salref_core::synth::{generate_candidates, generate_phantom, PhantomSpec};
use salref_core::tinynet::{TrainConfig, TrainReport};
use salref_core::volume::{read_nifti, write_label_map, write_nifti};
use salref_core::{extract_all, match_lesions, saliency_batch, zscore, FeatureVector, Group, LabelMap, SaliencyConfig, SaliencyMap, TinyNet, VolumeStack};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::manifest::Manifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Train/test assignment of the cases in the data directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl Cohort {
    /// Cases in a fixed order: train first, then test.
    pub fn cases(&self) -> Vec<(&str, Split)> {
        self.train
            .iter()
            .map(|c| (c.as_str(), Split::Train))
            .chain(self.test.iter().map(|c| (c.as_str(), Split::Test)))
            .collect()
    }

    fn split_of(&self, case: &str) -> Option<Split> {
        self.cases().into_iter().find(|(c, _)| *c == case).map(|(_, s)| s)
    }
}

const STREAM_PHANTOM: u64 = 1;
const STREAM_CANDIDATES: u64 = 2;
const STREAM_SCORER_INIT: u64 = 3;
const STREAM_SCORER_TRAIN: u64 = 4;
const STREAM_SALIENCY: u64 = 5;
const STREAM_BOOTSTRAP: u64 = 6;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed for item `k` of a pipeline stream.
pub fn derive_seed(seed: u64, stream: u64, k: u64) -> u64 {
    splitmix64(seed ^ splitmix64((stream << 40) ^ k))
}

pub struct Paths {
    pub data: PathBuf,
    pub out: PathBuf,
}

impl Paths {
    pub fn new(cfg: &RunConfig) -> Self {
        Paths { data: cfg.data_dir(), out: cfg.out.clone() }
    }
    pub fn cohort(&self) -> PathBuf {
        self.data.join("cohort.json")
    }
    pub fn case_dir(&self, case: &str) -> PathBuf {
        self.data.join(case)
    }
    pub fn scorer(&self) -> PathBuf {
        self.out.join("scorer.bin")
    }
    pub fn saliency_dir(&self) -> PathBuf {
        self.out.join("saliency")
    }
    pub fn saliency_map(&self, case: &str, id: u32) -> PathBuf {
        self.saliency_dir().join(format!("{case}_{id}_sal.nii"))
    }
    pub fn lesions(&self) -> PathBuf {
        self.saliency_dir().join("lesions.csv")
    }
    pub fn features(&self) -> PathBuf {
        self.out.join("features.csv")
    }
    pub fn excluded(&self) -> PathBuf {
        self.out.join("features_excluded.csv")
    }
    pub fn model(&self) -> PathBuf {
        self.out.join("model.json")
    }
    pub fn importance(&self) -> PathBuf {
        self.out.join("importance.csv")
    }
    pub fn refine(&self) -> PathBuf {
        self.out.join("refine.json")
    }
    pub fn decisions(&self) -> PathBuf {
        self.out.join("decisions.csv")
    }
    pub fn shift(&self) -> PathBuf {
        self.out.join("shift.json")
    }
    pub fn report(&self) -> PathBuf {
        self.out.join("report.txt")
    }
}

fn require(path: &Path, stage: &str) -> Result<()> {
    if !path.exists() {
        bail!("missing {}; run `salref {stage}` first", path.display());
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))
}

pub fn load_cohort(paths: &Paths) -> Result<Cohort> {
    require(&paths.cohort(), "synth")?;
    read_json(&paths.cohort())
}

/// One case: input channels, ground truth and predicted instances.
pub struct Case {
    pub name: String,
    pub stack: VolumeStack,
    pub gt: LabelMap,
    pub pred: LabelMap,
    pub instances: Vec<LesionInstance>,
    pub files: Vec<PathBuf>,
}

fn channel_files(dir: &Path) -> Vec<PathBuf> {
    (0..).map(|k| dir.join(format!("channel_{k}.nii"))).take_while(|p| p.exists()).collect()
}

/// Loads a case; ground truth and predictions are relabelled as 26-connected components.
pub fn load_case(paths: &Paths, name: &str, normalize: bool) -> Result<Case> {
    let dir = paths.case_dir(name);
    let mut files = channel_files(&dir);
    if files.is_empty() {
        bail!("case {name}: no channel_0.nii in {}", dir.display());
    }
    let mut channels = Vec::with_capacity(files.len());
    for (k, f) in files.iter().enumerate() {
        let vol = read_nifti(f)?.into_volume(format!("channel_{k}"))?;
        channels.push(if normalize { zscore(&vol, None).with_context(|| format!("normalizing {}", f.display()))? } else { vol });
    }
    let stack = VolumeStack::new(channels)?;
    let mut instance_map = |file: &str| -> Result<(LabelMap, Vec<LesionInstance>)> {
        let p = dir.join(file);
        let labels: Vec<u32> = read_nifti(&p)?.data.iter().map(|v| u32::from(*v != 0.0)).collect();
        files.push(p);
        let fg = LabelMap::new(stack.dims(), labels)?.foreground();
        Ok(connected_components(&fg, Connectivity::Corners26))
    };
    let (gt, _) = instance_map("gt.nii")?;
    let (pred, instances) = instance_map("pred.nii")?;
    Ok(Case { name: name.to_string(), stack, gt, pred, instances, files })
}

#[derive(Debug, Serialize)]
struct PhantomRecord<'a> {
    case: &'a str,
    split: Split,
    spec: &'a PhantomSpec,
    candidate_seed: u64,
    n_fp: usize,
}

/// Writes the synthetic cohort into the data directory.
pub fn cmd_synth(cfg: &RunConfig) -> Result<Cohort> {
    let paths = Paths::new(cfg);
    let s = &cfg.synth;
    let n = s.n_train + s.n_test;
    let names: Vec<String> = (0..n).map(|k| format!("case_{k:03}")).collect();
    let cohort = Cohort { train: names[..s.n_train].to_vec(), test: names[s.n_train..].to_vec() };
    let specs: Vec<PhantomSpec> =
        (0..n).map(|k| PhantomSpec { seed: derive_seed(cfg.seed, STREAM_PHANTOM, k as u64), ..s.phantom.clone() }).collect();
    let cand_seeds: Vec<u64> = (0..n).map(|k| derive_seed(cfg.seed, STREAM_CANDIDATES, k as u64)).collect();
    let generated: Vec<_> = specs
        .par_iter()
        .zip(&cand_seeds)
        .map(|(spec, &cs)| -> Result<_> {
            let p = generate_phantom(spec)?;
            let c = generate_candidates(&p, s.n_fp, cs)?;
            Ok((p, c))
        })
        .collect::<Result<_>>()?;

    let mut manifest = Manifest::new("synth", cfg);
    let mut records = Vec::new();
    for (k, (phantom, cand)) in generated.iter().enumerate() {
        let dir = paths.case_dir(&names[k]);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for (c, vol) in cand.stack.channels().iter().enumerate() {
            let f = dir.join(format!("channel_{c}.nii"));
            write_nifti(vol, &f)?;
            manifest.output(&f)?;
        }
        let spacing = phantom.spec.spacing;
        for (file, labels) in [("gt.nii", &phantom.gt), ("pred.nii", &cand.pred)] {
            let f = dir.join(file);
            write_label_map(labels, spacing, &f)?;
            manifest.output(&f)?;
        }
        let split = if k < s.n_train { Split::Train } else { Split::Test };
        records.push(PhantomRecord { case: &names[k], split, spec: &specs[k], candidate_seed: cand_seeds[k], n_fp: s.n_fp });
    }
    write_json(&paths.cohort(), &cohort)?;
    let phantoms = paths.data.join("phantoms.json");
    write_json(&phantoms, &records)?;
    manifest.output(&paths.cohort())?;
    manifest.output(&phantoms)?;
    manifest.write()?;
    log::info!("synth: wrote {n} cases to {}", paths.data.display());
    Ok(cohort)
}

/// Trains the voxel scorer on the training cases.
pub fn cmd_train_scorer(cfg: &RunConfig) -> Result<TrainReport> {
    let paths = Paths::new(cfg);
    let cohort = load_cohort(&paths)?;
    let mut manifest = Manifest::new("train-scorer", cfg);
    let mut dataset = Vec::new();
    for name in &cohort.train {
        let case = load_case(&paths, name, cfg.normalize_inputs)?;
        for f in &case.files {
            manifest.input(f)?;
        }
        dataset.push((case.stack, case.gt.foreground()));
    }
    let c_in = dataset[0].0.n_channels();
    let mut net = TinyNet::new(c_in, derive_seed(cfg.seed, STREAM_SCORER_INIT, 0))?;
    net.target = cfg.scorer.target;
    let tc = TrainConfig { epochs: cfg.scorer.epochs, lr: cfg.scorer.lr, seed: derive_seed(cfg.seed, STREAM_SCORER_TRAIN, 0) };
    let report = net.train(&dataset, &tc)?;
    fs::create_dir_all(&paths.out)?;
    net.save(paths.scorer())?;
    let log_path = paths.out.join("scorer_training.json");
    write_json(&log_path, &report)?;
    manifest.output(&paths.scorer())?;
    manifest.output(&log_path)?;
    manifest.write()?;
    log::info!("train-scorer: final loss {:.6}", report.epoch_losses.last().copied().unwrap_or(f64::NAN));
    Ok(report)
}

/// Per-lesion row written by the saliency stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionRow {
    pub patient: String,
    pub lesion_id: u32,
    pub split: Split,
    pub group: Group,
    pub n_voxels: usize,
    pub mean: f64,
    pub max: f64,
    pub min: f64,
}

fn group_of(matched: &salref_core::MatchResult, id: u32) -> Group {
    if matched.is_tp(id) {
        Group::TP
    } else {
        Group::FP
    }
}

/// Instance-level saliency maps for every predicted lesion of every case.
pub fn cmd_saliency(cfg: &RunConfig) -> Result<Vec<LesionRow>> {
    let paths = Paths::new(cfg);
    require(&paths.scorer(), "train-scorer")?;
    let cohort = load_cohort(&paths)?;
    let net = TinyNet::load(paths.scorer())?;
    let mut manifest = Manifest::new("saliency", cfg);
    manifest.input(&paths.scorer())?;
    fs::create_dir_all(paths.saliency_dir())?;
    let mut rows = Vec::new();
    for (idx, (name, split)) in cohort.cases().into_iter().enumerate() {
        let case = load_case(&paths, name, cfg.normalize_inputs)?;
        for f in &case.files {
            manifest.input(f)?;
        }
        if case.instances.is_empty() {
            manifest.notes.push(format!("{name}: no predicted lesions"));
            continue;
        }
        let matched = match_lesions(&case.pred, &case.gt)?;
        let sal_cfg =
            SaliencyConfig { seed: cfg.saliency.seed ^ derive_seed(cfg.seed, STREAM_SALIENCY, idx as u64), ..cfg.saliency.clone() };
        let maps = saliency_batch(&net, &case.stack, &case.instances, &sal_cfg)?;
        for (inst, map) in case.instances.iter().zip(maps) {
            let map: SaliencyMap = match map {
                Ok(m) => m,
                Err(e) => {
                    log::warn!("{name} lesion {}: saliency failed: {e}", inst.id);
                    manifest.notes.push(format!("{name} lesion {}: saliency failed: {e}", inst.id));
                    continue;
                }
            };
            let f = paths.saliency_map(name, inst.id);
            write_nifti(&map.map, &f)?;
            manifest.output(&f)?;
            let vals: Vec<f64> = inst.voxels.iter().map(|v| map.map.get(*v)).collect();
            rows.push(LesionRow {
                patient: name.to_string(),
                lesion_id: inst.id,
                split,
                group: group_of(&matched, inst.id),
                n_voxels: vals.len(),
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
            });
        }
    }
    let mut w = csv_writer(&paths.lesions())?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    manifest.output(&paths.lesions())?;
    manifest.write()?;
    Ok(rows)
}

pub fn read_lesion_rows(paths: &Paths) -> Result<Vec<LesionRow>> {
    require(&paths.lesions(), "saliency")?;
    csv_reader(&paths.lesions())?.deserialize().map(|r| r.context("parsing lesions.csv")).collect()
}

/// Radiomic features of every saliency map, one CSV row per lesion.
pub fn cmd_features(cfg: &RunConfig) -> Result<Vec<FeatureVector>> {
    let paths = Paths::new(cfg);
    let rows = read_lesion_rows(&paths)?;
    let mut manifest = Manifest::new("features", cfg);
    manifest.input(&paths.lesions())?;
    let mut by_case: BTreeMap<&str, Vec<&LesionRow>> = BTreeMap::new();
    for r in &rows {
        by_case.entry(r.patient.as_str()).or_default().push(r);
    }
    let mut results = Vec::new();
    for (name, lesions) in by_case {
        let case = load_case(&paths, name, false)?;
        let out: Vec<(&LesionRow, Result<FeatureVector>)> = lesions
            .par_iter()
            .map(|row| {
                let res = (|| -> Result<FeatureVector> {
                    let inst = case
                        .instances
                        .get(row.lesion_id as usize - 1)
                        .with_context(|| format!("{name}: lesion {} not in pred.nii", row.lesion_id))?;
                    let f = paths.saliency_map(name, row.lesion_id);
                    let map = read_nifti(&f)?.into_volume("saliency")?;
                    let sal = SaliencyMap { map, lesion_id: row.lesion_id, config: cfg.saliency.clone() };
                    let mut fv = extract_all(&sal, inst, &cfg.radiomics, None)?;
                    fv.patient = name.to_string();
                    fv.group = Some(row.group);
                    Ok(fv)
                })();
                (*row, res)
            })
            .collect();
        results.extend(out);
    }
    let names = feature_names_for(&cfg.radiomics);
    let mut w = csv_writer(&paths.features())?;
    let mut header = vec!["patient".to_string(), "lesion_id".into(), "group".into()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    let mut ex = csv_writer(&paths.excluded())?;
    ex.write_record(["patient", "lesion_id", "reason"])?;
    let mut vectors = Vec::new();
    for (row, res) in results {
        manifest.input(&paths.saliency_map(&row.patient, row.lesion_id))?;
        match res {
            Ok(fv) => {
                let mut rec = vec![fv.patient.clone(), fv.lesion_id.to_string(), row.group.to_string()];
                rec.extend(fv.values.iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
                vectors.push(fv);
            }
            Err(e) => {
                log::warn!("{} lesion {}: excluded from features: {e:#}", row.patient, row.lesion_id);
                ex.write_record([row.patient.clone(), row.lesion_id.to_string(), format!("{e:#}")])?;
            }
        }
    }
    w.flush()?;
    ex.flush()?;
    manifest.output(&paths.features())?;
    manifest.output(&paths.excluded())?;
    manifest.write()?;
    Ok(vectors)
}

/// Reads `features.csv` back; returns the feature names and the vectors.
pub fn read_features(paths: &Paths) -> Result<(Vec<String>, Vec<FeatureVector>)> {
    require(&paths.features(), "features")?;
    let mut r = csv_reader(&paths.features())?;
    let names: Vec<String> = r.headers()?.iter().skip(3).map(str::to_string).collect();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |s: &str| s.parse::<f64>().with_context(|| format!("bad number {s:?} in features.csv"));
        out.push(FeatureVector {
            patient: rec[0].to_string(),
            lesion_id: rec[1].parse()?,
            group: Some(rec[2].parse()?),
            values: rec.iter().skip(3).map(parse).collect::<Result<_>>()?,
            n_levels: 0,
            notes: Vec::new(),
        });
    }
    Ok((names, out))
}

/// Fits the TP/FP logistic model on the training cases.
pub fn cmd_train_lr(cfg: &RunConfig) -> Result<LrModel> {
    let paths = Paths::new(cfg);
    let cohort = load_cohort(&paths)?;
    let (names, vectors) = read_features(&paths)?;
    let train: Vec<&FeatureVector> = vectors.iter().filter(|v| cohort.split_of(&v.patient) == Some(Split::Train)).collect();
    if train.is_empty() {
        bail!("no training lesions in features.csv");
    }
    let rows: Vec<Vec<f64>> = train.iter().map(|v| v.values.clone()).collect();
    let y: Vec<bool> = train.iter().map(|v| v.group == Some(Group::TP)).collect();
    let model = LrModel::fit(names.clone(), &rows, &y, &cfg.lr.solver(), cfg.lr.threshold)?;
    if !model.training.converged {
        log::warn!("train-lr: solver stopped at max_iter without converging");
    }
    model.save(paths.model())?;
    let mut w = csv_writer(&paths.importance())?;
    w.write_record(["feature", "weight", "normalized"])?;
    if let Ok(imp) = feature_importance(&model) {
        let mut order: Vec<usize> = (0..imp.len()).filter(|&j| imp[j] != 0.0).collect();
        order.sort_by(|&a, &b| imp[b].abs().total_cmp(&imp[a].abs()).then(a.cmp(&b)));
        for j in order {
            w.write_record([names[j].clone(), model.weights[j].to_string(), imp[j].to_string()])?;
        }
    } else {
        log::warn!("train-lr: all weights are zero; the model predicts a constant");
    }
    w.flush()?;
    let mut manifest = Manifest::new("train-lr", cfg);
    manifest.input(&paths.features())?;
    manifest.output(&paths.model())?;
    manifest.output(&paths.importance())?;
    manifest.notes.push(format!("{} nonzero weights, {} sweeps, converged: {}", model.nonzero_weights(), model.training.iterations, model.training.converged));
    manifest.write()?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOutput {
    pub threshold: f64,
    pub n_cases: usize,
    pub confusion: RefinedConfusion,
    pub unrefined: MetricReport,
    pub refined: MetricReport,
}

/// Applies the model to the test cases and reports metrics before and after.
pub fn cmd_refine(cfg: &RunConfig) -> Result<RefineOutput> {
    let paths = Paths::new(cfg);
    require(&paths.model(), "train-lr")?;
    let cohort = load_cohort(&paths)?;
    let model = LrModel::load(paths.model())?;
    let (_, vectors) = read_features(&paths)?;
    let mut manifest = Manifest::new("refine", cfg);
    manifest.input(&paths.model())?;
    manifest.input(&paths.features())?;
    let mut confusion = RefinedConfusion::default();
    let mut decisions: Vec<LesionDecision> = Vec::new();
    let mut misses = Vec::new();
    for name in &cohort.test {
        let case = load_case(&paths, name, false)?;
        for f in &case.files[case.files.len() - 2..] {
            manifest.input(f)?;
        }
        let matched = match_lesions(&case.pred, &case.gt)?;
        let feats: BTreeMap<u32, FeatureVector> =
            vectors.iter().filter(|v| v.patient == *name).map(|v| (v.lesion_id, v.clone())).collect();
        let (c, d) = salref_core::refine_predictions(name, &matched, &feats, Some(&model), cfg.lr.threshold)?;
        confusion.merge(&c);
        decisions.extend(d);
        misses.push((name.clone(), matched.n_fn()));
    }
    let boot = BootstrapConfig {
        b: cfg.bootstrap.b,
        alpha: cfg.bootstrap.alpha,
        seed: derive_seed(cfg.seed, STREAM_BOOTSTRAP, 0),
        unit: cfg.bootstrap.unit,
    };
    let unrefined = MetricReport::from_records(&records_from_decisions(&decisions, &misses, false), Some(&boot))?;
    let refined = MetricReport::from_records(&records_from_decisions(&decisions, &misses, true), Some(&boot))?;
    let output = RefineOutput { threshold: cfg.lr.threshold, n_cases: cohort.test.len(), confusion, unrefined, refined };
    write_json(&paths.refine(), &output)?;
    let mut w = csv_writer(&paths.decisions())?;
    w.write_record(["patient", "lesion_id", "group", "proba", "kept"])?;
    for d in &decisions {
        let p = d.proba.map_or_else(String::new, |p| p.to_string());
        w.write_record([d.patient.clone(), d.lesion_id.to_string(), d.group.to_string(), p, d.kept.to_string()])?;
    }
    w.flush()?;
    manifest.output(&paths.refine())?;
    manifest.output(&paths.decisions())?;
    manifest.write()?;
    Ok(output)
}

/// Saliency statistics of train versus test lesions.
pub fn cmd_shift(cfg: &RunConfig) -> Result<ShiftReport> {
    let paths = Paths::new(cfg);
    let rows = read_lesion_rows(&paths)?;
    let stats = |split| -> Vec<MapStats> {
        rows.iter().filter(|r| r.split == split).map(|r| MapStats { group: r.group, mean: r.mean, max: r.max, min: r.min }).collect()
    };
    let report = domain_shift_report(&stats(Split::Train), &stats(Split::Test))?;
    for w in &report.warnings {
        log::warn!("shift: {w}");
    }
    write_json(&paths.shift(), &report)?;
    let mut manifest = Manifest::new("shift", cfg);
    manifest.input(&paths.lesions())?;
    manifest.output(&paths.shift())?;
    manifest.write()?;
    Ok(report)
}

/// Row label and `(tp, fp, fn)` counts, parsed from `LABEL=TP,FP,FN` or `TP,FP,FN`.
pub fn parse_counts(s: &str) -> Result<(String, (usize, usize, usize))> {
    let (label, nums) = match s.split_once('=') {
        Some((l, n)) => (l.to_string(), n),
        None => (String::new(), s),
    };
    let v: Vec<usize> = nums.split(',').map(|x| x.trim().parse().with_context(|| format!("bad count {x:?}"))).collect::<Result<_>>()?;
    let [tp, fp, fn_] = v[..] else { bail!("expected TP,FP,FN in {s:?}") };
    Ok((label, (tp, fp, fn_)))
}

/// Table of detection metrics, from explicit counts or from `refine.json`.
pub fn cmd_report(cfg: &RunConfig, counts: &[(String, (usize, usize, usize))]) -> Result<String> {
    let paths = Paths::new(cfg);
    let mut manifest = Manifest::new("report", cfg);
    let table = if counts.is_empty() {
        require(&paths.refine(), "refine")?;
        let r: RefineOutput = read_json(&paths.refine())?;
        manifest.input(&paths.refine())?;
        render_table(&[("Detector only", &r.unrefined), ("Detector + saliency", &r.refined)])
    } else {
        let reports: Vec<(String, MetricReport)> = counts
            .iter()
            .enumerate()
            .map(|(k, (l, (tp, fp, fn_)))| {
                let label = if l.is_empty() { format!("row {}", k + 1) } else { l.clone() };
                Ok((label, MetricReport::from_counts(*tp, *fp, *fn_)?))
            })
            .collect::<Result<_>>()?;
        let rows: Vec<(&str, &MetricReport)> = reports.iter().map(|(l, r)| (l.as_str(), r)).collect();
        render_table(&rows)
    };
    fs::create_dir_all(&paths.out)?;
    fs::write(paths.report(), &table).with_context(|| format!("writing {}", paths.report().display()))?;
    manifest.output(&paths.report())?;
    manifest.write()?;
    Ok(table)
}

/// Every stage in order.
pub fn cmd_run(cfg: &RunConfig) -> Result<RefineOutput> {
    cmd_synth(cfg)?;
    cmd_train_scorer(cfg)?;
    cmd_saliency(cfg)?;
    cmd_features(cfg)?;
    cmd_train_lr(cfg)?;
    let out = cmd_refine(cfg)?;
    cmd_shift(cfg)?;
    cmd_report(cfg, &[])?;
    Ok(out)
}
