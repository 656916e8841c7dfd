//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use mmo_core::data::{load_mlsvm, save_mlsvm, synth_linear, Dataset, Instance};
use mmo_core::metrics::{empirical_metric, preset, Averaging, EvalOptions, Preset};
use mmo_core::models::{LabelVector, LinearModel, SparseVector};
use mmo_core::rng;
use mmo_core::solver::{
    bisection_bound, ema_update, grid_size, lambda_cv_grid, train_ema, train_logistic, SearchConfig, Strategy,
    TrainConfig,
};
use mmo_core::verify::{
    check_equiv_battery, check_factorization, check_gradient, check_hconsistency_bound, check_runtime_scaling,
    check_sign, VerifyReport,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn from_reports(reports: &[VerifyReport]) -> Outcome {
    let passed = reports.iter().all(|r| r.passed);
    let detail = reports
        .iter()
        .map(|r| {
            let mut s = format!("{}: {} trials, max violation {:.3e} (tol {:.0e})", r.check, r.trials, r.max_violation, r.tolerance);
            if !r.passed {
                if let Some(w) = &r.worst {
                    s.push_str(&format!(" worst trial {} seed {}: {}", w.trial, w.seed, w.summary));
                }
            }
            s
        })
        .collect::<Vec<_>>()
        .join("; ");
    Outcome { passed, detail }
}

fn c1_factorization() -> Outcome {
    from_reports(&[check_factorization(8, 200, 1).unwrap()])
}

fn c2_linear_scaling() -> Outcome {
    let r = check_runtime_scaling(&[64, 256, 1024, 4096], 7, 2).unwrap();
    let mut o = from_reports(std::slice::from_ref(&r));
    o.detail.push_str(&format!(" [{}]", r.notes.join(", ")));
    o
}

fn c3_gradient() -> Outcome {
    from_reports(&[check_gradient(8, &[0.0, 0.5, 1.0], 1000, 3).unwrap()])
}

fn c4_equivalence() -> Outcome {
    from_reports(&[check_equiv_battery(50, 4, 1e-9).unwrap()])
}

fn c5_oracle_bisection() -> Outcome {
    let eps = 1e-3;
    let r = check_sign(50, 4, eps).unwrap();
    let mut o = from_reports(std::slice::from_ref(&r));
    o.detail.push_str(&format!(", bound {} iterations", bisection_bound(1.0, eps)));
    o
}

fn c6_bound_exact() -> Outcome {
    let reports: Vec<_> = [0.0, 0.5, 1.0].iter().map(|&tau| check_hconsistency_bound(1, tau, 10_000, 6).unwrap()).collect();
    from_reports(&reports)
}

fn c7_bound_numeric() -> Outcome {
    let reports: Vec<_> = [2, 3].iter().map(|&l| check_hconsistency_bound(l, 0.0, 500, 7).unwrap()).collect();
    from_reports(&reports)
}

fn micro_f1(model: &LinearModel, data: &Dataset) -> f64 {
    let spec = preset(Preset::F1, data.labels(), Averaging::Micro).unwrap();
    let preds: Vec<_> = data.instances().iter().map(|i| model.predict(&i.features).unwrap()).collect();
    empirical_metric(&data.truth(), &preds, &spec, EvalOptions::default()).unwrap_or(0.0)
}

/// Learning rates shared by both arms. Each arm keeps the rate with the best
/// validation micro-F1, so the budget (grid, epochs, batch size, data) is
/// identical. The surrogate's optimal weights are about two orders of
/// magnitude smaller than the logistic ones, hence the wide grid.
const C8_LEARNING_RATES: [f64; 6] = [3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2];

fn c8_end_to_end() -> Outcome {
    let spec = preset(Preset::F1, 10, Averaging::Micro).unwrap();
    let search = SearchConfig { strategy: Strategy::Ema, ..SearchConfig::default() };
    let mut rows = Vec::new();
    let (mut sum_mmo, mut sum_base, mut wins) = (0.0, 0.0, 0);
    for seed in 0..5u64 {
        let (ds, _) = synth_linear(10, 50, 20_000, 0.05, 1.0, seed).unwrap();
        let (train, test) = ds.split_at(15_000);
        let (fit, val) = train.split_at(12_000);
        // (validation F1, learning rate, model, chosen lambda)
        let mut mmo: Option<(f64, f64, LinearModel, f64)> = None;
        let mut base: Option<(f64, f64, LinearModel)> = None;
        for lr in C8_LEARNING_RATES {
            let cfg = TrainConfig { learning_rate: lr, batch_size: 128, epochs: 10, seed, tau: 0.0, ..TrainConfig::default() };
            let (m, report) = train_ema(&fit, &spec, &cfg, &search).unwrap();
            let v = micro_f1(&m.model, &val);
            if mmo.as_ref().is_none_or(|b| v > b.0) {
                mmo = Some((v, lr, m.model, report.chosen_lambda));
            }
            let b = train_logistic(&fit, &cfg).unwrap();
            let v = micro_f1(&b.model, &val);
            if base.as_ref().is_none_or(|c| v > c.0) {
                base = Some((v, lr, b.model));
            }
        }
        let (mmo, base) = (mmo.unwrap(), base.unwrap());
        let (a, b) = (micro_f1(&mmo.2, &test), micro_f1(&base.2, &test));
        sum_mmo += a;
        sum_base += b;
        if a - b >= 0.0 {
            wins += 1;
        }
        rows.push(format!(
            "seed {seed}: mmo {a:.4} (lr {:e}, lambda {:.3}) vs logistic {b:.4} (lr {:e})",
            mmo.1, mmo.3, base.1
        ));
    }
    let (mean_mmo, mean_base) = (sum_mmo / 5.0, sum_base / 5.0);
    Outcome {
        passed: mean_mmo >= mean_base && wins >= 4,
        detail: format!("mean micro-F1 mmo {mean_mmo:.4} vs logistic {mean_base:.4}, {wins}/5 seeds >= 0; {}", rows.join("; ")),
    }
}

fn c9_cv_grid() -> Outcome {
    let (ds, _) = synth_linear(5, 20, 3000, 0.1, 0.5, 9).unwrap();
    let (train, val) = ds.split_at(2000);
    let spec = preset(Preset::F1, 5, Averaging::Micro).unwrap();
    let tcfg = TrainConfig { learning_rate: 0.01, batch_size: 128, epochs: 3, seed: 9, ..TrainConfig::default() };
    let mut details = Vec::new();
    let mut passed = true;
    for eps in [0.1, 0.15, 0.25] {
        let scfg = SearchConfig { epsilon: Some(eps), strategy: Strategy::CvGrid, ..SearchConfig::default() };
        let (_, report) = lambda_cv_grid(&train, &val, &spec, &tcfg, &scfg).unwrap();
        let expected = grid_size(1.0, eps);
        let chosen = report.candidates.iter().find(|c| c.lambda == report.chosen_lambda).and_then(|c| c.validation_metric);
        let best_ok = chosen.is_some_and(|v| report.candidates.iter().all(|c| c.validation_metric.is_none_or(|m| v >= m)));
        passed &= report.candidates.len() == expected && best_ok;
        details.push(format!(
            "eps {eps}: {} candidates (expected {expected}), chosen lambda {} metric {:.4}",
            report.candidates.len(),
            report.chosen_lambda,
            chosen.unwrap_or(f64::NAN)
        ));
    }
    Outcome { passed, detail: details.join("; ") }
}

fn c10_ema() -> Outcome {
    let mut worst: f64 = 0.0;
    for (lambda0, c, gamma) in [(0.5, 0.9, 0.7), (0.5, 0.1, 0.7), (0.0, 1.0, 0.5), (0.9, 0.3, 0.95)] {
        let mut lambda = lambda0;
        for t in 1..=50 {
            lambda = ema_update(lambda, c, gamma);
            let expect = gamma.powi(t) * (lambda0 - c).abs();
            worst = worst.max(((lambda - c).abs() - expect).abs());
        }
    }
    Outcome { passed: worst <= 1e-12, detail: format!("max deviation {worst:.3e} over 4 recurrences, t <= 50") }
}

fn random_value<R: Rng>(r: &mut R) -> f64 {
    match r.random_range(0..4) {
        0 => r.random_range(-1.0..1.0),
        1 => f64::from(r.random_range(-1000i32..1000)),
        2 => loop {
            let v = f64::from_bits(r.random::<u64>());
            if v.is_finite() {
                break v;
            }
        },
        _ => r.random_range(-1e-3..1e-3) * 10f64.powi(r.random_range(-300..300)),
    }
}

fn random_dataset(trial: u64) -> Dataset {
    let mut r = rng::stream(11, trial);
    let l = r.random_range(1..=8);
    let d = r.random_range(1..=30);
    let m = r.random_range(0..=40);
    let instances = (0..m)
        .map(|_| {
            let mut entries = Vec::new();
            for i in 0..d {
                if r.random_bool(0.3) {
                    entries.push((i, random_value(&mut r)));
                }
            }
            let labels = LabelVector::from_config_index(l, r.random_range(0..1usize << l));
            Instance { features: SparseVector::new(entries).unwrap(), labels }
        })
        .collect();
    Dataset::new(l, d, instances).unwrap()
}

fn bits(ds: &Dataset) -> Vec<(Vec<(usize, u64)>, LabelVector)> {
    ds.instances()
        .iter()
        .map(|i| (i.features.entries().iter().map(|&(k, v)| (k, v.to_bits())).collect(), i.labels.clone()))
        .collect()
}

fn c11_round_trip() -> Outcome {
    let dir = std::env::temp_dir().join(format!("mmo-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut failures = 0;
    for trial in 0..100 {
        let ds = random_dataset(trial);
        let path = dir.join(format!("{trial}.mlsvm"));
        save_mlsvm(&ds, &path).unwrap();
        let back = load_mlsvm(&path).unwrap();
        if back.labels() != ds.labels() || back.dim() != ds.dim() || bits(&back) != bits(&ds) {
            failures += 1;
        }
    }
    std::fs::remove_dir_all(&dir).ok();
    Outcome { passed: failures == 0, detail: format!("{failures}/100 datasets differ after save/load") }
}

type Criterion = (&'static str, fn() -> Outcome, f64);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("factorization exactness", c1_factorization, 30.0),
        ("linear scaling in l", c2_linear_scaling, 60.0),
        ("gradient correctness", c3_gradient, 60.0),
        ("equivalence and sign on finite instances", c4_equivalence, 30.0),
        ("oracle bisection rate", c5_oracle_bisection, 30.0),
        ("consistency bound, exact single label", c6_bound_exact, 60.0),
        ("consistency bound, numeric l = 2, 3", c7_bound_numeric, 300.0),
        ("end-to-end micro-F1 vs logistic", c8_end_to_end, 300.0),
        ("cv grid contract", c9_cv_grid, 300.0),
        ("ema recurrence", c10_ema, 10.0),
        ("dataset round trip", c11_round_trip, 30.0),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let ok = outcome.passed && secs < *budget;
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name} ({secs:.1}s of {budget:.0}s): {}",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
