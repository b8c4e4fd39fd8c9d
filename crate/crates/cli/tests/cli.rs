use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bundlesight"))
}

fn run(dir: &Path, threads: Option<&str>, args: &[&str]) -> Output {
    let mut c = bin();
    c.current_dir(dir).args(args);
    match threads {
        Some(t) => c.env("BUNDLESIGHT_THREADS", t),
        None => c.env_remove("BUNDLESIGHT_THREADS"),
    };
    c.output().expect("binary runs")
}

fn ok(dir: &Path, threads: Option<&str>, args: &[&str]) {
    let o = run(dir, threads, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

const SPEC: &str = "spec.json";
const CONFIG: &str = "em.json";

fn setup(dir: &Path) {
    write(
        dir,
        SPEC,
        &json!({"product_count": 3, "n_transactions": 300, "seed": 7}),
    );
    write(
        dir,
        "test_spec.json",
        &json!({"product_count": 3, "n_transactions": 100, "seed": 8}),
    );
    write(
        dir,
        CONFIG,
        &json!({"max_iterations": 5, "seed": 3, "pool_size": 20000}),
    );
}

/// generate, fit and eval in `dir`, returning every produced file.
fn pipeline(dir: &Path, threads: Option<&str>) -> Vec<(String, Vec<u8>)> {
    setup(dir);
    ok(
        dir,
        threads,
        &[
            "generate",
            "--spec",
            SPEC,
            "--out",
            "data.json",
            "--truth-out",
            "truth.json",
        ],
    );
    ok(
        dir,
        threads,
        &[
            "generate",
            "--spec",
            "test_spec.json",
            "--out",
            "test.json",
            "--truth-out",
            "truth_b.json",
        ],
    );
    ok(
        dir,
        threads,
        &["fit", "--data", "data.json", "--config", CONFIG, "--out", "report.json"],
    );
    ok(
        dir,
        threads,
        &[
            "eval",
            "--report",
            "report.json",
            "--truth",
            "truth.json",
            "--test",
            "test.json",
            "--mc-count",
            "2000",
            "--out",
            "metrics.json",
        ],
    );
    ["data.json", "truth.json", "test.json", "report.json", "metrics.json"]
        .iter()
        .map(|f| (f.to_string(), fs::read(dir.join(f)).unwrap()))
        .collect()
}

#[test]
fn round_trip_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let first = pipeline(a.path(), None);
    assert_eq!(first, pipeline(b.path(), Some("1")));
    assert_eq!(first, pipeline(c.path(), Some("4")));
    let metrics: Value = serde_json::from_slice(&first[4].1).unwrap();
    assert!(metrics["l1_param_error"].as_f64().unwrap() > 0.0);
    let rmse = metrics["rmse"].as_f64().unwrap();
    assert!(rmse > 0.0 && rmse < 1.0);
    assert!(metrics.get("runtime_seconds").is_none());
}

#[test]
fn eval_of_the_truth_is_zero_and_leaves_inputs_alone() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    setup(dir);
    ok(
        dir,
        None,
        &[
            "generate",
            "--spec",
            SPEC,
            "--out",
            "data.json",
            "--truth-out",
            "truth.json",
        ],
    );
    let truth: Value = serde_json::from_slice(&fs::read(dir.join("truth.json")).unwrap()).unwrap();
    write(
        dir,
        "perfect.json",
        &json!({"mu": truth["mu"], "sigma": truth["sigma"], "iterations": 0, "error_trace": [], "converged": true, "seed": 0}),
    );
    let before: Vec<Vec<u8>> = ["perfect.json", "truth.json", "data.json"]
        .iter()
        .map(|f| fs::read(dir.join(f)).unwrap())
        .collect();
    ok(
        dir,
        None,
        &[
            "eval",
            "--report",
            "perfect.json",
            "--truth",
            "truth.json",
            "--test",
            "data.json",
            "--mc-count",
            "500",
            "--out",
            "m.json",
        ],
    );
    let after: Vec<Vec<u8>> = ["perfect.json", "truth.json", "data.json"]
        .iter()
        .map(|f| fs::read(dir.join(f)).unwrap())
        .collect();
    assert_eq!(before, after);
    let m: Value = serde_json::from_slice(&fs::read(dir.join("m.json")).unwrap()).unwrap();
    assert_eq!(m["l1_param_error"].as_f64(), Some(0.0));
}

#[test]
fn malformed_inputs_name_the_field() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    write(
        dir,
        "missing.json",
        &json!({"product_count": 2, "transactions": [{"menu": [{"mask": [1, 0], "price": 5.0}]}]}),
    );
    write(
        dir,
        "bad_choice.json",
        &json!({"product_count": 2, "transactions": [{"menu": [{"mask": [1, 0], "price": 5.0}], "choice": 4}]}),
    );
    write(
        dir,
        "bad_price.json",
        &json!({"product_count": 2, "transactions": [{"menu": [{"mask": [1, 0], "price": -1.0}], "choice": 0}]}),
    );
    write(dir, "bad_config.json", &json!({"max_iterations": 5, "tolerence": 0.1}));
    write(
        dir,
        "ok.json",
        &json!({"product_count": 1, "transactions": [{"menu": [{"mask": [1], "price": 5.0}], "choice": 1}]}),
    );
    let cases: [(&[&str], &str); 4] = [
        (&["fit", "--data", "missing.json", "--out", "r.json"], "choice"),
        (&["fit", "--data", "bad_choice.json", "--out", "r.json"], "choice"),
        (&["fit", "--data", "bad_price.json", "--out", "r.json"], "price"),
        (
            &[
                "fit",
                "--data",
                "ok.json",
                "--config",
                "bad_config.json",
                "--out",
                "r.json",
            ],
            "tolerence",
        ),
    ];
    for (args, field) in cases {
        let o = run(dir, None, args);
        assert!(!o.status.success(), "{args:?} should fail");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(field), "{args:?}: {err}");
    }
    assert!(!dir.join("r.json").exists());
}

#[test]
fn bad_thread_setting_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let o = run(
        d.path(),
        Some("zero"),
        &["lab", "assumption1", "--spec", "x.json", "--out", "y.csv"],
    );
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("BUNDLESIGHT_THREADS"));
}

#[test]
fn censored_and_baseline_commands_run() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    write(
        dir,
        "cens_spec.json",
        &json!({
            "product_count": 2,
            "n_transactions": 300,
            "ground_truth": {"kind": "gaussian", "mu": [20.0, 22.0], "sigma": [[4.0, 1.0], [1.0, 5.0]]},
            "fixed_menus": [
                [{"mask": [1, 0], "price": 21.0}, {"mask": [0, 1], "price": 23.0}, {"mask": [1, 1], "price": 41.0}],
                [{"mask": [1, 0], "price": 19.0}, {"mask": [0, 1], "price": 21.0}]
            ],
            "censor": true,
            "seed": 2
        }),
    );
    write(
        dir,
        CONFIG,
        &json!({"max_iterations": 3, "seed": 1, "pool_size": 20000}),
    );
    ok(
        dir,
        None,
        &[
            "generate",
            "--spec",
            "cens_spec.json",
            "--out",
            "d.json",
            "--truth-out",
            "t.json",
            "--censored-out",
            "c.json",
        ],
    );
    ok(
        dir,
        None,
        &[
            "fit-censored",
            "--data",
            "c.json",
            "--config",
            CONFIG,
            "--instances",
            "4",
            "--out",
            "rc.json",
        ],
    );
    ok(
        dir,
        None,
        &[
            "fit-gmm", "--data", "d.json", "--k", "2", "--config", CONFIG, "--out", "rg.json",
        ],
    );
    ok(dir, None, &["baseline-mnl", "--data", "d.json", "--out", "rm.json"]);
    write(
        dir,
        "mh.json",
        &json!({"sigma": [[4.0, 1.0], [1.0, 5.0]], "n_iterations": 50, "mc_count": 200, "seed": 1}),
    );
    ok(
        dir,
        None,
        &[
            "baseline-mh",
            "--data",
            "d.json",
            "--config",
            "mh.json",
            "--out",
            "rh.json",
        ],
    );
    write(
        dir,
        "grid.json",
        &json!({"sigma": [[4.0, 1.0], [1.0, 5.0]], "low": [15.0, 15.0], "high": [25.0, 25.0], "steps": 4, "mc_count": 200}),
    );
    ok(
        dir,
        None,
        &[
            "baseline-grid",
            "--data",
            "d.json",
            "--config",
            "grid.json",
            "--out",
            "rr.json",
        ],
    );
    for (f, method) in [("rc.json", "em-censored"), ("rm.json", "mnl")] {
        let v: Value = serde_json::from_slice(&fs::read(dir.join(f)).unwrap()).unwrap();
        assert_eq!(v["method"], method);
    }
    let o = run(
        dir,
        None,
        &[
            "eval",
            "--report",
            "rm.json",
            "--truth",
            "t.json",
            "--test",
            "d.json",
            "--mc-count",
            "10",
            "--out",
            "me.json",
        ],
    );
    assert!(o.status.success());
    let m: Value = serde_json::from_slice(&fs::read(dir.join("me.json")).unwrap()).unwrap();
    assert!(m["l1_param_error"].is_null() && m["rmse"].as_f64().is_some());
}

#[test]
fn lab_commands_write_traces() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    write(
        dir,
        "a1.json",
        &json!({"partition": {"kind": "slabs", "cuts": [0.0]}, "truth": {"mu": [0.0], "sigma": [[1.0]]}, "mc_count": 100000}),
    );
    let o = run(
        dir,
        None,
        &["lab", "assumption1", "--spec", "a1.json", "--out", "a1.csv"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = String::from_utf8_lossy(&o.stdout).to_string();
    let lambda: f64 = line.trim().trim_start_matches("lambda_min = ").parse().unwrap();
    assert!((lambda - 2.0 / std::f64::consts::PI).abs() < 0.02);
    write(
        dir,
        "c.json",
        &json!({"partition": {"kind": "slabs", "cuts": [0.0]}, "truth": {"mu": [0.0], "sigma": [[1.0]]}, "radii": [0.2], "n_steps": 5, "mc_count": 100000}),
    );
    let o = run(
        dir,
        None,
        &[
            "lab",
            "contraction",
            "--spec",
            "c.json",
            "--out",
            "c.csv",
            "--report",
            "c_report.json",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.join("c.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains("step"));
    assert!(csv.lines().count() >= 6);
}
