use std::collections::BTreeMap;
use std::fs::File;
use std::hint::black_box;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};

use mmo_core::data::{load_mlsvm, save_mlsvm, synth_discrete, synth_linear, Dataset};
use mmo_core::losses::{gamma_from, Surrogate, SurrogateParams, NAIVE_MAX_LABELS};
use mmo_core::metrics::{empirical_metric, preset, Averaging, EvalOptions, MetricSpec, Preset};
use mmo_core::models::{LabelVector, LinearModel, Sign};
use mmo_core::solver::{
    lambda_cv_grid, lambda_oracle_bisect, lambda_surrogate_bisect, train_ema, train_logistic, train_surrogate,
    SearchConfig, Strategy, TrainConfig, TrainOutcome,
};
use mmo_core::verify::{
    check_equiv_battery, check_factorization, check_gradient, check_hconsistency_bound, check_runtime_scaling,
    check_sign, VerifyReport,
};
use mmo_core::Error;

use crate::args::{
    AveragingArg, BenchArgs, Check, EvalArgs, EvalAveraging, OptimArgs, SearchArgs, SearchStrategy, SynthArgs,
    TrainArgs, TrainStrategy, VerifyArgs,
};
use crate::report::{Failure, EXIT_DATA, EXIT_OK, EXIT_VERIFY};

pub struct Outcome {
    pub exit_code: u8,
    pub results: Value,
    pub artifacts: BTreeMap<&'static str, String>,
    pub summary: Vec<String>,
}

impl Outcome {
    fn ok(results: Value, summary: Vec<String>) -> Self {
        Outcome { exit_code: EXIT_OK, results, artifacts: BTreeMap::new(), summary }
    }
}

impl From<AveragingArg> for Averaging {
    fn from(a: AveragingArg) -> Self {
        match a {
            AveragingArg::Micro => Averaging::Micro,
            AveragingArg::Macro => Averaging::Macro,
            AveragingArg::Instance => Averaging::Instance,
        }
    }
}

fn train_config(o: &OptimArgs, seed: u64) -> Result<TrainConfig, Failure> {
    let cfg = TrainConfig {
        learning_rate: o.learning_rate,
        batch_size: o.batch_size,
        epochs: o.epochs,
        seed,
        tau: o.tau,
        optimizer: o.optimizer,
        beta1: o.beta1,
        beta2: o.beta2,
        adam_epsilon: o.adam_epsilon,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_data(path: &Path) -> Result<Dataset, Failure> {
    load_mlsvm(path).map_err(|e| Failure::data(path, e))
}

fn load_model(path: &Path) -> Result<LinearModel, Failure> {
    let file = File::open(path).map_err(|e| Failure::data(path, e.into()))?;
    LinearModel::read_from(BufReader::new(file)).map_err(|e| Failure::data(path, e))
}

fn save_model(model: &LinearModel, path: &Path) -> Result<(), Failure> {
    let write = || -> mmo_core::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        model.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| Failure::new(EXIT_DATA, format!("cannot write model {}: {e}", path.display())))
}

fn predict_all(model: &LinearModel, data: &Dataset) -> Result<Vec<LabelVector>, Failure> {
    if model.labels() != data.labels() {
        return Err(Failure::new(
            EXIT_DATA,
            format!("model has {} labels, data has {}", model.labels(), data.labels()),
        ));
    }
    Ok(data.instances().iter().map(|i| model.predict(&i.features)).collect::<mmo_core::Result<Vec<_>>>()?)
}

/// Metric under every averaging mode; `null` where the denominator vanishes.
fn metrics_all_modes(model: &LinearModel, data: &Dataset, spec: &MetricSpec) -> Result<Value, Failure> {
    let preds = predict_all(model, data)?;
    let truth = data.truth();
    let mut out = serde_json::Map::new();
    for av in Averaging::ALL {
        let v = match empirical_metric(&truth, &preds, &spec.with_averaging(av), EvalOptions::default()) {
            Ok(v) => Some(v),
            Err(Error::DegenerateDenominator(_)) => None,
            Err(e) => return Err(e.into()),
        };
        out.insert(av.name().into(), json!(v));
    }
    Ok(Value::Object(out))
}

fn fmt_opt(v: &Value) -> String {
    v.as_f64().map_or("undefined".into(), |x| format!("{x:.4}"))
}

pub fn train(a: &TrainArgs, seed: u64) -> Result<Outcome, Failure> {
    let cfg = train_config(&a.optim, seed)?;
    let fixed = match (a.strategy, a.lambda) {
        (TrainStrategy::FixedLambda, None) => return Err(Failure::config("--strategy fixed-lambda requires --lambda")),
        (TrainStrategy::FixedLambda, Some(l)) if !l.is_finite() => {
            return Err(Failure::config(format!("--lambda must be finite, got {l}")))
        }
        (_, l) => l,
    };
    let data = load_data(&a.data)?;
    let spec = preset(a.metric.metric, data.labels(), a.metric.averaging.into())?;

    let mut results = serde_json::Map::new();
    let outcome: TrainOutcome = match a.strategy {
        TrainStrategy::Ema => {
            let search =
                SearchConfig { strategy: Strategy::Ema, ema_gamma: a.ema_gamma, lambda0: a.lambda0, ..SearchConfig::default() };
            let (outcome, report) = train_ema(&data, &spec, &cfg, &search)?;
            results.insert("lambda".into(), json!(report.chosen_lambda));
            results.insert("lambda_trace".into(), json!(report.lambda_trace));
            results.insert("termination".into(), json!(report.termination));
            outcome
        }
        TrainStrategy::FixedLambda => {
            let lambda = fixed.expect("checked above");
            results.insert("lambda".into(), json!(lambda));
            train_surrogate(&data, &gamma_from(&spec.alpha, &spec.beta, lambda)?, &cfg)?
        }
        TrainStrategy::Logistic => train_logistic(&data, &cfg)?,
    };
    save_model(&outcome.model, &a.out)?;
    let metrics = metrics_all_modes(&outcome.model, &data, &spec)?;

    let mut summary = vec![format!(
        "trained {} labels x {} features on {} instances, final loss {:.6}",
        data.labels(),
        data.dim(),
        data.len(),
        outcome.epoch_losses.last().copied().unwrap_or(f64::NAN)
    )];
    if let Some(l) = results.get("lambda") {
        summary.push(format!("lambda {}", fmt_opt(l)));
    }
    summary.push(format!(
        "training {}: micro {} macro {} instance {}",
        a.metric.metric.name(),
        fmt_opt(&metrics["micro"]),
        fmt_opt(&metrics["macro"]),
        fmt_opt(&metrics["instance"])
    ));
    summary.push(format!("model written to {}", a.out.display()));

    results.insert("epoch_losses".into(), json!(outcome.epoch_losses));
    results.insert("train_metrics".into(), metrics);
    let mut out = Outcome::ok(Value::Object(results), summary);
    out.artifacts.insert("model", a.out.display().to_string());
    Ok(out)
}

pub fn lambda_search(a: &SearchArgs, seed: u64) -> Result<Outcome, Failure> {
    let cfg = SearchConfig {
        lambda_min: a.lambda_min,
        lambda_max: a.lambda_max,
        epsilon: a.epsilon,
        epsilon_m: a.epsilon_m,
        strategy: match a.strategy {
            SearchStrategy::Oracle => Strategy::OracleBisect,
            SearchStrategy::SurrogateBs => Strategy::SurrogateBisect,
            SearchStrategy::Cv => Strategy::CvGrid,
        },
        ..SearchConfig::default()
    };
    cfg.validate()?;
    let name = match a.strategy {
        SearchStrategy::Oracle => "oracle",
        SearchStrategy::SurrogateBs => "surrogate-bs",
        SearchStrategy::Cv => "cv",
    };
    let need = |p: &Option<std::path::PathBuf>, flag: &str| {
        p.clone().ok_or_else(|| Failure::config(format!("--strategy {name} requires {flag}")))
    };
    let averaging: Averaging = a.metric.averaging.into();

    let (model, report) = match a.strategy {
        SearchStrategy::Oracle => {
            if a.out.is_some() {
                return Err(Failure::config("--out is not available for the oracle strategy, which trains no model"));
            }
            let path = need(&a.dist, "--dist")?;
            let text = std::fs::read_to_string(&path).map_err(|e| Failure::data(&path, e.into()))?;
            let dist = synth_discrete(&text).map_err(|e| Failure::data(&path, e))?;
            let spec = preset(a.metric.metric, dist.labels(), averaging)?;
            let (_, report) = lambda_oracle_bisect(&dist, &spec, &cfg)?;
            (None, report)
        }
        SearchStrategy::SurrogateBs => {
            let tcfg = train_config(&a.optim, seed)?;
            let train = load_data(&need(&a.data, "--data")?)?;
            let spec = preset(a.metric.metric, train.labels(), averaging)?;
            let (outcome, report) = lambda_surrogate_bisect(&train, &spec, &tcfg, &cfg)?;
            (Some(outcome.model), report)
        }
        SearchStrategy::Cv => {
            let tcfg = train_config(&a.optim, seed)?;
            let (train_path, val_path) = (need(&a.data, "--data")?, need(&a.val, "--val")?);
            let train = load_data(&train_path)?;
            let val = load_data(&val_path)?;
            let spec = preset(a.metric.metric, train.labels(), averaging)?;
            let (outcome, report) = lambda_cv_grid(&train, &val, &spec, &tcfg, &cfg)?;
            (Some(outcome.model), report)
        }
    };

    let mut summary = vec![format!(
        "{}: lambda {:.6} after {} iterations ({})",
        report.strategy, report.chosen_lambda, report.iterations, report.termination
    )];
    if let Some(bound) = report.iteration_bound {
        summary.push(format!("iteration bound {bound}"));
    }
    let mut artifacts = BTreeMap::new();
    if let (Some(model), Some(path)) = (&model, &a.out) {
        save_model(model, path)?;
        artifacts.insert("model", path.display().to_string());
        summary.push(format!("model written to {}", path.display()));
    }
    let results = json!({ "chosen_lambda": report.chosen_lambda, "search": report });
    Ok(Outcome { exit_code: EXIT_OK, results, artifacts, summary })
}

pub fn eval(a: &EvalArgs) -> Result<Outcome, Failure> {
    let model = load_model(&a.model)?;
    let data = load_data(&a.data)?;
    let preds = predict_all(&model, &data)?;
    let truth = data.truth();
    let modes: Vec<Averaging> = match a.averaging {
        EvalAveraging::Micro => vec![Averaging::Micro],
        EvalAveraging::Macro => vec![Averaging::Macro],
        EvalAveraging::Instance => vec![Averaging::Instance],
        EvalAveraging::All => Averaging::ALL.to_vec(),
    };
    let opts = EvalOptions { skip_degenerate: a.skip_degenerate };
    let mut metrics = serde_json::Map::new();
    let mut summary = Vec::new();
    for av in modes {
        let spec = preset(a.metric, data.labels(), av)?;
        let v = empirical_metric(&truth, &preds, &spec, opts).map_err(|e| {
            let mut f = Failure::from(e);
            if !a.skip_degenerate && f.code == crate::report::EXIT_DEGENERATE {
                f.message = format!("{} averaging: {}; pass --skip-degenerate to drop such terms", av.name(), f.message);
            }
            f
        })?;
        metrics.insert(av.name().into(), json!(v));
        summary.push(format!("{} {}: {v:.6}", av.name(), a.metric.name()));
    }
    let results = json!({ "instances": data.len(), "metric": a.metric, "values": metrics });
    Ok(Outcome::ok(results, summary))
}

pub fn verify(a: &VerifyArgs, seed: u64) -> Result<Outcome, Failure> {
    let checks = match a.check {
        Check::All => vec![Check::Factorization, Check::Gradient, Check::Equiv, Check::Sign, Check::Bound, Check::Runtime],
        c => vec![c],
    };
    let l_max = |default: usize| a.labels.iter().copied().max().unwrap_or(default);
    let taus = |default: &[f64]| if a.tau.is_empty() { default.to_vec() } else { a.tau.clone() };
    let mut reports: Vec<VerifyReport> = Vec::new();
    for check in checks {
        match check {
            Check::Factorization => reports.push(check_factorization(l_max(8), a.trials.unwrap_or(200), seed)?),
            Check::Gradient => {
                reports.push(check_gradient(l_max(8), &taus(&[0.0, 0.5, 1.0]), a.trials.unwrap_or(1000), seed)?)
            }
            Check::Equiv => reports.push(check_equiv_battery(a.trials.unwrap_or(50), seed, 1e-9)?),
            Check::Sign => reports.push(check_sign(a.trials.unwrap_or(50), seed, 1e-3)?),
            Check::Bound => {
                let ls = if a.labels.is_empty() { vec![1, 2, 3] } else { a.labels.clone() };
                for l in ls {
                    let default_taus: &[f64] = if l == 1 { &[0.0, 0.5, 1.0] } else { &[0.0] };
                    let trials = a.trials.unwrap_or(if l == 1 { 10_000 } else { 500 });
                    for tau in taus(default_taus) {
                        reports.push(check_hconsistency_bound(l, tau, trials, seed)?);
                    }
                }
            }
            Check::Runtime => {
                let ls = if a.labels.is_empty() { vec![64, 256, 1024, 4096] } else { a.labels.clone() };
                reports.push(check_runtime_scaling(&ls, 7, seed)?);
            }
            Check::All => unreachable!("expanded above"),
        }
    }
    let passed = reports.iter().all(|r| r.passed);
    let summary = reports
        .iter()
        .map(|r| {
            format!(
                "{} {}: {} trials, max violation {:.3e} (tolerance {:.0e}){}",
                if r.passed { "PASS" } else { "FAIL" },
                r.check,
                r.trials,
                r.max_violation,
                r.tolerance,
                if r.lower_bound { ", numeric infimum" } else { "" }
            )
        })
        .collect();
    let mut out = Outcome::ok(json!({ "passed": passed, "reports": reports }), summary);
    if !passed {
        out.exit_code = EXIT_VERIFY;
    }
    Ok(out)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

/// Median over `repeats` of the mean time per call, in nanoseconds.
fn time_per_call(repeats: usize, inner: usize, mut f: impl FnMut()) -> f64 {
    f();
    let samples = (0..repeats)
        .map(|_| {
            let start = Instant::now();
            for _ in 0..inner {
                f();
            }
            start.elapsed().as_nanos() as f64 / inner as f64
        })
        .collect();
    median(samples)
}

pub fn bench(a: &BenchArgs, seed: u64) -> Result<Outcome, Failure> {
    if a.repeats == 0 || a.labels.contains(&0) || a.m == 0 {
        return Err(Failure::config("bench needs repeats >= 1, m >= 1 and label counts >= 1"));
    }
    let mut loss_rows = Vec::new();
    let mut summary = Vec::new();
    for &l in &a.labels {
        let spec = preset(Preset::F1, l, Averaging::Micro)?;
        let surrogate = Surrogate::new(&gamma_from(&spec.alpha, &spec.beta, 0.5)?, &SurrogateParams::training(0.0))?;
        let scores: Vec<f64> = (0..l).map(|k| ((k * 7919 % 1000) as f64) / 500.0 - 1.0).collect();
        let y = LabelVector::new((0..l).map(|k| if k % 3 == 0 { Sign::Pos } else { Sign::Neg }).collect());
        let inner = (1 << 18) / l + 1;
        let factorized = time_per_call(a.repeats, inner, || {
            black_box(surrogate.value(black_box(&scores), &y).expect("valid inputs"));
        });
        let naive = (l <= NAIVE_MAX_LABELS).then(|| {
            time_per_call(a.repeats, (1 << 16) >> l.min(16) | 1, || {
                black_box(surrogate.naive(black_box(&scores), &y).expect("valid inputs"));
            })
        });
        summary.push(match naive {
            Some(n) => format!("l={l}: factorized {factorized:.0} ns, naive {n:.0} ns"),
            None => format!("l={l}: factorized {factorized:.0} ns"),
        });
        loss_rows.push(json!({ "l": l, "factorized_ns": factorized, "naive_ns": naive }));
    }

    let (data, _) = synth_linear(10, 50, a.m, 0.05, 1.0, seed)?;
    let spec = preset(Preset::F1, 10, Averaging::Micro)?;
    let gamma = gamma_from(&spec.alpha, &spec.beta, 0.5)?;
    let cfg = TrainConfig { epochs: 1, seed, ..TrainConfig::default() };
    let epoch = || -> Result<f64, Failure> {
        let start = Instant::now();
        train_surrogate(&data, &gamma, &cfg)?;
        Ok(start.elapsed().as_secs_f64())
    };
    let sequential = single_thread(epoch)?;
    summary.push(format!("epoch on {} instances: {sequential:.3} s on 1 thread", a.m));
    let parallel = if cfg!(feature = "parallel") {
        let t = epoch()?;
        summary.push(format!("epoch on {} instances: {t:.3} s on {} threads", a.m, crate::threads()));
        Some(t)
    } else {
        None
    };
    let results = json!({
        "loss": loss_rows,
        "epoch": { "instances": a.m, "sequential_s": sequential, "parallel_s": parallel, "threads": crate::threads() },
    });
    Ok(Outcome::ok(results, summary))
}

#[cfg(feature = "parallel")]
fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("single-thread pool").install(f)
}

#[cfg(not(feature = "parallel"))]
fn single_thread<T>(f: impl FnOnce() -> T) -> T {
    f()
}

pub fn synth(a: &SynthArgs, seed: u64) -> Result<Outcome, Failure> {
    let (data, plant) = synth_linear(a.labels, a.dim, a.size, a.positive_rate, a.noise, seed)?;
    save_mlsvm(&data, &a.out).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", a.out.display())))?;
    let mut artifacts = BTreeMap::new();
    artifacts.insert("data", a.out.display().to_string());
    let mut summary = vec![format!(
        "wrote {} instances, {} labels, positive fraction {:.4} to {}",
        data.len(),
        data.labels(),
        data.positive_fraction(),
        a.out.display()
    )];
    if let Some(path) = &a.plant {
        save_model(&plant, path)?;
        artifacts.insert("plant", path.display().to_string());
        summary.push(format!("planted model written to {}", path.display()));
    }
    let results = json!({ "instances": data.len(), "positive_fraction": data.positive_fraction() });
    Ok(Outcome { exit_code: EXIT_OK, results, artifacts, summary })
}
