use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn mmo(args: &[&str], env: &[(&str, &str)]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_mmo"))
        .args(args)
        .envs(env.iter().copied())
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().expect("exited normally"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn ok(args: &[&str]) -> Value {
    let r = mmo(args, &[]);
    assert_eq!(r.code, 0, "args {args:?}\nstderr: {}", r.stderr);
    parse(&r)
}

fn parse(r: &Run) -> Value {
    let v: Value = serde_json::from_str(&r.stdout).unwrap_or_else(|e| panic!("bad json ({e}): {}", r.stdout));
    assert_valid(&v);
    v
}

fn assert_valid(report: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/run_report.schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema violations: {errors:?}\n{report:#}");
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn write(&self, name: &str, text: &str) -> String {
        std::fs::write(self.path(name), text).unwrap();
        self.p(name)
    }

    fn synth(&self, name: &str, extra: &[&str]) -> String {
        let out = self.p(name);
        let mut args = vec!["synth", "--l", "3", "--d", "6", "--m", "600", "--out", &out];
        args.extend_from_slice(extra);
        ok(&[&["--json"], args.as_slice()].concat());
        out
    }
}

#[test]
fn train_ema_reports_lambda_trace_and_writes_model() {
    let f = Fixture::new();
    let data = f.synth("train.mlsvm", &[]);
    let model = f.p("m.model");
    let report_path = f.p("report.json");
    let v = ok(&[
        "train", "--data", &data, "--metric", "f1", "--averaging", "micro", "--strategy", "ema", "--ema-gamma", "0.7",
        "--out", &model, "--epochs", "2", "--json", "--report", &report_path,
    ]);
    assert_eq!(v["command"], "train");
    // 600 instances in batches of 128, two epochs.
    assert_eq!(v["results"]["lambda_trace"].as_array().unwrap().len(), 10);
    assert_eq!(v["results"]["epoch_losses"].as_array().unwrap().len(), 2);
    assert_eq!(v["config"]["seed"], 0);
    assert_eq!(v["config"]["ema_gamma"], 0.7);
    assert_eq!(v["artifacts"]["model"], model.as_str());
    assert!(std::fs::read_to_string(&model).unwrap().starts_with("mmo-model v1 l=3 d=6"));
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(written["results"], v["results"]);
}

#[test]
fn identical_runs_give_identical_reports_apart_from_timing() {
    let f = Fixture::new();
    let data = f.synth("train.mlsvm", &[]);
    let run = |out: &str| {
        let mut v = ok(&["train", "--data", &data, "--out", &f.p(out), "--seed", "11", "--epochs", "2", "--json"]);
        let obj = v.as_object_mut().unwrap();
        obj.remove("timing");
        obj.remove("artifacts");
        obj["config"].as_object_mut().unwrap().remove("out");
        v
    };
    assert_eq!(run("a.model"), run("b.model"));
    assert_eq!(std::fs::read(f.path("a.model")).unwrap(), std::fs::read(f.path("b.model")).unwrap());
}

#[test]
fn fixed_lambda_requires_lambda() {
    let f = Fixture::new();
    let data = f.synth("train.mlsvm", &[]);
    let r = mmo(&["train", "--data", &data, "--out", &f.p("m"), "--strategy", "fixed-lambda"], &[]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("--lambda"));
    let v = ok(&["train", "--data", &data, "--out", &f.p("m"), "--strategy", "fixed-lambda", "--lambda", "0.4", "--json"]);
    assert_eq!(v["results"]["lambda"], 0.4);
}

#[test]
fn planted_model_scores_one_on_noise_free_data() {
    let f = Fixture::new();
    let plant = f.p("plant.model");
    let data = f.synth("clean.mlsvm", &["--noise", "0", "--positive-rate", "0.2", "--plant", &plant]);
    let v = ok(&["eval", "--model", &plant, "--data", &data, "--metric", "f1", "--json"]);
    assert_eq!(v["results"]["values"]["micro"], 1.0);

    let v = ok(&["eval", "--model", &plant, "--data", &data, "--averaging", "all", "--skip-degenerate", "--json"]);
    let values = v["results"]["values"].as_object().unwrap();
    assert_eq!(values.len(), 3);
    assert!(values.values().all(|x| x.as_f64() == Some(1.0)));
}

#[test]
fn eval_missing_model_is_a_data_error() {
    let f = Fixture::new();
    let data = f.synth("d.mlsvm", &[]);
    let r = mmo(&["eval", "--model", &f.p("absent.model"), "--data", &data], &[]);
    assert_eq!(r.code, 3, "{}", r.stderr);
}

#[test]
fn degenerate_metric_exits_five_unless_skipped() {
    let f = Fixture::new();
    let data = f.write("empty.mlsvm", "#ml l=2 d=1\n- 0:1\n- 0:-1\n");
    let model = f.write("neg.model", "mmo-model v1 l=2 d=1\nb=-5\nb=-5\n");
    let r = mmo(&["eval", "--model", &model, "--data", &data], &[]);
    assert_eq!(r.code, 5, "{}", r.stderr);
    assert!(r.stderr.contains("--skip-degenerate"));
    // Only the first instance is degenerate under instance averaging.
    let mixed = f.write("mixed.mlsvm", "#ml l=2 d=1\n- 0:1\n0 0:-1\n");
    let r = mmo(&["eval", "--model", &model, "--data", &mixed, "--averaging", "instance"], &[]);
    assert_eq!(r.code, 5, "{}", r.stderr);
    let r = mmo(&["eval", "--model", &model, "--data", &mixed, "--averaging", "instance", "--skip-degenerate"], &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    // Every instance degenerate leaves nothing to average.
    let r = mmo(&["eval", "--model", &model, "--data", &data, "--averaging", "instance", "--skip-degenerate"], &[]);
    assert_eq!(r.code, 5, "{}", r.stderr);
}

#[test]
fn malformed_data_is_a_data_error() {
    let f = Fixture::new();
    let data = f.write("bad.mlsvm", "#ml l=2 d=3\n0 0:1 0:2\n");
    let r = mmo(&["train", "--data", &data, "--out", &f.p("m")], &[]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert!(r.stderr.contains("line 2"), "{}", r.stderr);
}

#[test]
fn divergence_exits_four() {
    let f = Fixture::new();
    let data = f.synth("d.mlsvm", &[]);
    let r = mmo(&["train", "--data", &data, "--out", &f.p("m"), "--optimizer", "gd", "--lr", "1.7976931348623157e308"], &[]);
    assert_eq!(r.code, 4, "{}", r.stderr);
    assert!(!f.path("m").exists());
}

#[test]
fn cv_reports_one_candidate_per_grid_point() {
    let f = Fixture::new();
    let train = f.synth("train.mlsvm", &[]);
    let val = f.synth("val.mlsvm", &["--seed", "1"]);
    let out = f.p("cv.model");
    let v = ok(&["lambda-search", "--strategy", "cv", "--data", &train, "--val", &val, "--epochs", "1", "--out", &out, "--json"]);
    let search = &v["results"]["search"];
    assert_eq!(search["candidates"].as_array().unwrap().len(), 11);
    assert_eq!(search["strategy"], "cv_grid");
    assert!(f.path("cv.model").exists());

    let r = mmo(&["lambda-search", "--strategy", "cv", "--data", &train], &[]);
    assert_eq!(r.code, 2);
}

#[test]
fn oracle_reports_lambda_and_iterations() {
    let f = Fixture::new();
    let dist = f.write("two.dist", "# two points\npoint a w=0.5\nmarginals 0.7 0.2\npoint b w=0.5\ntable 0.1 0.2 0.3 0.4\n");
    let v = ok(&["lambda-search", "--strategy", "oracle", "--dist", &dist, "--json"]);
    let search = &v["results"]["search"];
    let iterations = search["iterations"].as_u64().unwrap();
    assert!(iterations <= search["iteration_bound"].as_u64().unwrap());
    assert_eq!(iterations, 10);
    let lambda = v["results"]["chosen_lambda"].as_f64().unwrap();
    assert!(lambda > 0.0 && lambda < 1.0);

    let bad = f.write("bad.dist", "point a w=0.5\nmarginals 0.7\n");
    assert_eq!(mmo(&["lambda-search", "--strategy", "oracle", "--dist", &bad], &[]).code, 3);
}

#[test]
fn surrogate_bisection_records_a_branch_per_midpoint() {
    let f = Fixture::new();
    let train = f.synth("train.mlsvm", &[]);
    let v = ok(&["lambda-search", "--strategy", "surrogate-bs", "--data", &train, "--epochs", "1", "--lr", "0.01", "--json"]);
    let candidates = v["results"]["search"]["candidates"].as_array().unwrap();
    assert!(!candidates.is_empty());
    assert!(candidates.iter().all(|c| c["branch"].is_string()));
}

#[test]
fn verify_bound_single_label_has_no_violations() {
    let v = ok(&["verify", "--check", "bound", "--l", "1", "--tau", "0", "--trials", "2000", "--json"]);
    let reports = v["results"]["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["max_violation"], 0.0);
    assert_eq!(v["results"]["passed"], true);
}

#[test]
fn verify_is_deterministic_given_seed() {
    let args = ["verify", "--check", "sign", "--trials", "10", "--seed", "7", "--json"];
    let (a, b) = (ok(&args), ok(&args));
    assert_eq!(a["results"], b["results"]);
}

#[test]
fn verify_rejects_out_of_range_sizes() {
    let r = mmo(&["verify", "--check", "factorization", "--l", "20"], &[]);
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn unknown_flags_and_bad_thread_counts_are_config_errors() {
    assert_eq!(mmo(&["verify", "--check", "sign", "--frobnicate"], &[]).code, 2);
    assert_eq!(mmo(&["eval", "--model", "m", "--data", "d", "--metric", "recall"], &[]).code, 2);
    assert_eq!(mmo(&["verify", "--check", "sign", "--trials", "2"], &[("MMO_THREADS", "0")]).code, 2);
    let r = mmo(&["verify", "--check", "sign", "--trials", "2", "--json"], &[("MMO_THREADS", "1")]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(parse(&r)["timing"]["threads"], 1);
}

#[test]
fn bench_reports_naive_only_where_tractable() {
    let v = ok(&["bench", "--l", "4,32", "--m", "300", "--repeats", "1", "--json"]);
    let rows = v["results"]["loss"].as_array().unwrap();
    assert!(rows[0]["naive_ns"].is_number());
    assert!(rows[1]["naive_ns"].is_null());
}

#[test]
fn human_summary_without_json() {
    let r = mmo(&["verify", "--check", "equiv", "--trials", "5"], &[]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.starts_with("PASS equiv"), "{}", r.stdout);
}
