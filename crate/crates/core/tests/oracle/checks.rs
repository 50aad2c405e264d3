//! One function per verified property. Each returns a short summary on success
//! and a description of the first failure otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use salref_core::eval::{bootstrap_exhaustive, mann_whitney_u, MwMethod, ResampleUnit};
use salref_core::radiomics::{compute_features, N_FEATURES};
use salref_core::refine::{lr_objective, ClassWeights};
use salref_core::RefinedConfusion;
use salref_core::{
    bootstrap_ci, f1, feature_names, instance_saliency, ppv, train_lr, BootstrapConfig, Dims, GradientTarget, LesionInstance,
    LesionRecord, LrConfig, Outcome, SaliencyConfig, Scorer, TinyNet, Voxel,
};

use super::{cases, lr, net, radiomics, saliency, stats};

pub type Check = Result<String, String>;

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1.0)
}

const FROZEN_NAMES: &str = include_str!("../fixtures/feature_names.txt");

pub fn table_arithmetic() -> Check {
    let cases = [
        ("f1(3050,1818,789)", f1(3050, 1818, 789), 0.7006),
        ("ppv(3050,1818)", ppv(3050, 1818), 0.6265),
        ("f1(2732,763,1107)", f1(2732, 763, 1107), 0.7450),
        ("ppv(2732,763)", ppv(2732, 763), 0.7817),
    ];
    let n = cases.len();
    for (label, got, want) in cases {
        let got = got.map_err(|e| format!("{label}: {e}"))?;
        if format!("{got:.4}") != format!("{want:.4}") {
            return Err(format!("{label} = {got:.6}, expected {want:.4}"));
        }
    }
    let c = RefinedConfusion { kept_tp: 2732, kept_fp: 763, rejected_tp: 318, rejected_fp: 1055, original_fn: 789, excluded: 0 };
    if c.n_fn() != 1107 || c.original_counts() != (3050, 1818, 789) {
        return Err(format!("refined confusion gives FN {} and originals {:?}", c.n_fn(), c.original_counts()));
    }
    Ok(format!("{n} metrics at 4 decimals, refined FN 1107 from 789 + 318"))
}

fn random_blob(dims: Dims, rng: &mut ChaCha8Rng) -> Vec<Voxel> {
    let c: Voxel = [rng.random_range(1..7), rng.random_range(1..7), rng.random_range(1..7)];
    let mut v = vec![c];
    for dz in 0..3 {
        for dy in 0..3 {
            for dx in 0..3 {
                let q = [c[0] + dx - 1, c[1] + dy - 1, c[2] + dz - 1];
                if q != c && dims.contains(q) && rng.random_bool(0.25) {
                    v.push(q);
                }
            }
        }
    }
    v
}

/// Library saliency against the naive all-volumes reference on seeded 8³ cases.
pub fn saliency_oracle(n_cases: u64) -> Check {
    let dims = Dims::new(8, 8, 8);
    let mut worst = 0.0f64;
    let mut nonzero = 0usize;
    for seed in 0..n_cases {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let c = rng.random_range(1..=2);
        let x = cases::random_stack(dims, c, seed);
        let mut model = TinyNet::new(c, seed).map_err(|e| e.to_string())?;
        model.target = if seed % 2 == 0 { GradientTarget::Sigmoid } else { GradientTarget::Logit };
        let omega = random_blob(dims, &mut rng);
        let cfg = SaliencyConfig {
            n_samples: rng.random_range(1..=4),
            noise_sigma: [0.0, 0.05, 0.3][rng.random_range(0..3)],
            channel: rng.random_range(0..c),
            seed: rng.random(),
        };
        let inst = LesionInstance::new(7, dims, omega.clone()).map_err(|e| e.to_string())?;
        let got = instance_saliency(&model, &x, &inst, &cfg).map_err(|e| e.to_string())?;
        let want = saliency::instance_saliency(&model, &x, &omega, cfg.n_samples, cfg.noise_sigma, cfg.channel, cfg.seed);

        let fwd = model.forward(&x).map_err(|e| e.to_string())?;
        for (a, b) in fwd.data().iter().zip(net::forward(&model, &x)) {
            if !close(*a, b, 1e-12) {
                return Err(format!("case {seed}: forward {a} vs reference {b}"));
            }
        }
        for (i, (a, b)) in got.map.data().iter().zip(&want).enumerate() {
            if !close(*a, *b, 1e-12) {
                return Err(format!("case {seed} voxel {:?}: {a} vs reference {b}", dims.coords(i)));
            }
            worst = worst.max((a - b).abs());
        }
        nonzero += want.iter().filter(|v| **v != 0.0).count();
    }
    if nonzero == 0 {
        return Err("every reference map is zero".into());
    }
    Ok(format!("{n_cases} cases, max abs diff {worst:.1e}"))
}

/// Analytic input gradients against central finite differences.
pub fn gradient_fd(n_seeds: u64, n_voxels: usize) -> Check {
    let dims = Dims::new(8, 8, 8);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for seed in 0..n_seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let c = 2;
        let x = cases::random_stack(dims, c, 50 + seed);
        let mut model = TinyNet::new(c, 70 + seed).map_err(|e| e.to_string())?;
        model.target = if seed % 2 == 0 { GradientTarget::Sigmoid } else { GradientTarget::Logit };
        let v_out: Voxel = [rng.random_range(0..8), rng.random_range(0..8), rng.random_range(0..8)];
        let channel = rng.random_range(0..c);
        let grad = model.input_gradient(&x, v_out, channel).map_err(|e| e.to_string())?;
        let reference = net::input_gradient(&model, &x, v_out, channel);
        let out = |stack: &salref_core::VolumeStack| -> Result<f64, String> {
            let p = model.forward(stack).map_err(|e| e.to_string())?.get(v_out);
            Ok(match model.target {
                GradientTarget::Sigmoid => p,
                GradientTarget::Logit => (p / (1.0 - p)).ln(),
            })
        };
        for _ in 0..n_voxels {
            let v: Voxel = std::array::from_fn(|a| {
                let lo = v_out[a].saturating_sub(2);
                let hi = (v_out[a] + 2).min(7);
                rng.random_range(lo..=hi)
            });
            let bump = |delta: f64| {
                let mut chans = x.clone().into_channels();
                let mut data = chans[channel].clone().into_data();
                data[dims.index(v)] += delta;
                chans[channel] = salref_core::Volume3D::new(dims, [1.0; 3], data, "x").unwrap();
                salref_core::VolumeStack::new(chans).unwrap()
            };
            let fd = (out(&bump(h))? - out(&bump(-h))?) / (2.0 * h);
            let g = grad.get(v);
            let scale = g.abs().max(fd.abs());
            let rel = if scale < 1e-9 { 0.0 } else { (g - fd).abs() / scale };
            if rel > 1e-4 {
                return Err(format!("seed {seed} out {v_out:?} in {v:?}: analytic {g:e} vs fd {fd:e} (rel {rel:.2e})"));
            }
            let r = reference[dims.index(v)];
            if !close(g, r, 1e-12) {
                return Err(format!("seed {seed} in {v:?}: analytic {g:e} vs reference backprop {r:e}"));
            }
            worst = worst.max(rel);
        }
    }
    Ok(format!("{} voxels, max rel err {worst:.1e}", n_seeds as usize * n_voxels))
}

/// All feature families against brute-force implementations.
pub fn radiomics_oracle(n_rois: u64) -> Check {
    let names = feature_names();
    let frozen: Vec<&str> = FROZEN_NAMES.lines().collect();
    if names.len() != N_FEATURES || names.iter().map(String::as_str).ne(frozen.iter().copied()) {
        return Err(format!("feature name list changed ({} names)", names.len()));
    }
    let mut worst = 0.0f64;
    for seed in 0..n_rois {
        let (map, roi, w, oroi) = cases::random_roi(seed);
        let (values, _) = compute_features(&map, &roi, w, 1, &mut Vec::new()).map_err(|e| format!("seed {seed}: {e}"))?;
        let expected = radiomics::features(&oroi);
        if expected.len() != N_FEATURES {
            return Err(format!("reference emitted {} features", expected.len()));
        }
        for (name, v) in names.iter().zip(&values) {
            let e = expected.get(name).ok_or_else(|| format!("reference lacks {name}"))?;
            if !close(*v, *e, 1e-10) {
                return Err(format!("roi {seed} {name}: {v} vs reference {e}"));
            }
            worst = worst.max((v - e).abs() / e.abs().max(1.0));
        }
    }
    Ok(format!("{n_rois} rois x {N_FEATURES} features, max rel diff {worst:.1e}"))
}

fn lr_problem(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let truth: Vec<f64> = (0..d).map(|j| if j % 2 == 0 { rng.random_range(-2.0..2.0) } else { 0.0 }).collect();
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let y: Vec<bool> = x
            .iter()
            .map(|r| {
                let z: f64 = r.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + 0.3;
                rng.random_bool(1.0 / (1.0 + (-z).exp()))
            })
            .collect();
        if y.iter().filter(|t| **t).count() >= 2 && y.iter().filter(|t| !**t).count() >= 2 {
            return (x, y);
        }
    }
}

/// Coordinate descent against a proximal-gradient reference, sparsity along a
/// lambda grid, and monotone objective traces.
pub fn lr_solver(n_problems: u64) -> Check {
    let cw = ClassWeights::default();
    let grid = [0.01, 0.1, 0.3, 1.0, 3.0];
    let mut worst = 0.0f64;
    for seed in 0..n_problems {
        let (x, y) = lr_problem(seed, 20, 5);
        let cfg = LrConfig { lambda: 0.1, ..LrConfig::default() };
        let fit = train_lr(&x, &y, &cfg, &[]).map_err(|e| e.to_string())?;
        if !fit.converged {
            return Err(format!("problem {seed}: no convergence"));
        }
        let problem = lr::Problem { x: &x, y: &y, lambda: 0.1, c_tp: cw.tp, c_fp: cw.fp };
        let theta = problem.solve(1e-10, 2_000_000);
        let reference = problem.objective(&theta);
        let own = lr_objective(&x, &y, &fit.weights, fit.bias, 0.1, cw);
        if (fit.objective - own).abs() > 1e-12 * own.abs().max(1.0) {
            return Err(format!("problem {seed}: reported objective {} vs recomputed {own}", fit.objective));
        }
        let gap = (fit.objective - reference).abs();
        if gap > 1e-6 {
            return Err(format!("problem {seed}: objective {} vs reference {reference}", fit.objective));
        }
        worst = worst.max(gap);

        let mut previous = usize::MAX;
        for &lambda in &grid {
            let fit = train_lr(&x, &y, &LrConfig { lambda, ..LrConfig::default() }, &[]).map_err(|e| e.to_string())?;
            let nnz = fit.weights.iter().filter(|w| **w != 0.0).count();
            if nnz > previous {
                return Err(format!("problem {seed}: {nnz} nonzero weights at lambda {lambda}, {previous} before"));
            }
            previous = nnz;
            for pair in fit.objective_trace.windows(2) {
                if pair[1] > pair[0] + 1e-12 * pair[0].abs() {
                    return Err(format!("problem {seed} lambda {lambda}: objective rose {} -> {}", pair[0], pair[1]));
                }
            }
        }
    }
    Ok(format!("{n_problems} problems, max objective gap {worst:.1e}"))
}

fn record(code: u8) -> LesionRecord {
    let outcome = match code {
        0 => Outcome::Tp { kept: true },
        1 => Outcome::Fp { kept: true },
        2 => Outcome::Fn,
        3 => Outcome::Fp { kept: false },
        _ => Outcome::Tp { kept: false },
    };
    LesionRecord::new("p", outcome)
}

fn compare_interval(label: &str, iv: salref_core::eval::Interval, law: &[(f64, f64)], alpha: f64, with_mean: bool) -> Check {
    let (lo, hi) = (stats::quantile(law, alpha / 2.0), stats::quantile(law, 1.0 - alpha / 2.0));
    let mean_ok = !with_mean || close(iv.mean, stats::mean(law), 1e-12);
    if close(iv.ci_low, lo, 1e-12) && close(iv.ci_high, hi, 1e-12) && mean_ok {
        Ok(String::new())
    } else {
        Err(format!("{label}: [{}, {}] mean {} vs exact [{lo}, {hi}] mean {}", iv.ci_low, iv.ci_high, iv.mean, stats::mean(law)))
    }
}

/// Mann-Whitney against full relabelling, bootstrap against exact enumeration,
/// and the U identity on random samples.
pub fn statistics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut n_mw = 0;
    for na in 1..8 {
        for nb in 1..=(8 - na) {
            for rep in 0..6 {
                let draw = |rng: &mut ChaCha8Rng| -> f64 {
                    if rep % 2 == 0 {
                        rng.random_range(0..4) as f64
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                };
                let a: Vec<f64> = (0..na).map(|_| draw(&mut rng)).collect();
                let b: Vec<f64> = (0..nb).map(|_| draw(&mut rng)).collect();
                let mw = mann_whitney_u(&a, &b).map_err(|e| e.to_string())?;
                let u = stats::twice_u(&a, &b) as f64 / 2.0;
                let p = stats::exact_p(&a, &b);
                if mw.method != MwMethod::Exact || mw.u_a != u || !close(mw.p, p, 1e-12) {
                    return Err(format!("{a:?} vs {b:?}: U {} p {} vs reference U {u} p {p}", mw.u_a, mw.p));
                }
                n_mw += 1;
            }
        }
    }

    let alpha = 0.05;
    let mut n_boot = 0;
    for code in 0..125u32 {
        let codes = [(code % 5) as u8, (code / 5 % 5) as u8, (code / 25) as u8];
        let records: Vec<LesionRecord> = codes.iter().map(|c| record(*c)).collect();
        let as_fn: Vec<u8> = codes.iter().map(|c| if *c == 4 { 2 } else { *c }).collect();
        let f1_law = stats::exact_law(&as_fn, |m| m.0);
        let ppv_law = stats::exact_law(&as_fn, |m| m.1);
        let cfg = BootstrapConfig { b: 20_000, alpha, seed: code as u64, unit: ResampleUnit::Lesion };
        let exhaustive = bootstrap_exhaustive(&records, alpha);
        let sampled = bootstrap_ci(&records, &cfg);
        if f1_law.is_empty() || ppv_law.is_empty() {
            if exhaustive.is_ok() || sampled.is_ok() {
                return Err(format!("{codes:?}: a metric is never defined but the bootstrap succeeded"));
            }
            continue;
        }
        let exhaustive = exhaustive.map_err(|e| format!("{codes:?}: {e}"))?;
        let sampled = sampled.map_err(|e| format!("{codes:?}: {e}"))?;
        compare_interval(&format!("{codes:?} exhaustive f1"), exhaustive.f1, &f1_law, alpha, true)?;
        compare_interval(&format!("{codes:?} exhaustive ppv"), exhaustive.ppv, &ppv_law, alpha, true)?;
        compare_interval(&format!("{codes:?} sampled f1"), sampled.f1, &f1_law, alpha, false)?;
        compare_interval(&format!("{codes:?} sampled ppv"), sampled.ppv, &ppv_law, alpha, false)?;
        n_boot += 1;
    }

    for _ in 0..100 {
        let na = rng.random_range(1..30);
        let nb = rng.random_range(1..30);
        let a: Vec<f64> = (0..na).map(|_| rng.random_range(0..10) as f64).collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.random_range(0..10) as f64).collect();
        let mw = mann_whitney_u(&a, &b).map_err(|e| e.to_string())?;
        if mw.u_a + mw.u_b != (na * nb) as f64 || !(0.0..=1.0).contains(&mw.p) {
            return Err(format!("U_a + U_b = {} for n_a n_b = {}", mw.u_a + mw.u_b, na * nb));
        }
    }
    Ok(format!("{n_mw} exact tests, {n_boot} bootstrap inputs, 100 U identities"))
}
