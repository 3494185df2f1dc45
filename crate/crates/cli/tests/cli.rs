use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn cqnls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqnls")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn small(name: &str, dir: &Path) -> Value {
    json!({
        "name": name,
        "grid": {"n_per_axis": 16, "half_length": 6.0},
        "coefficients": {"lambda1": 1.0, "b1": 0.5, "lambda2": 1.0, "b2": 1.0},
        "initial_datum": {"gaussian": {"amplitude": 0.5, "width": 1.0}},
        "stepper": {"dt": 0.01, "t_end": 0.1},
        "diagnostics": {"enabled": ["energy"], "stride": 2},
        "outputs": dir.join("out"),
        "seed": 7
    })
}

fn write(dir: &Path, file: &str, v: &Value) -> String {
    let p = dir.join(file);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn completed_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.json", &small("a", dir.path()));
    let out = cqnls(&["--quiet", "run", &cfg]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let csv = std::fs::read_to_string(dir.path().join("out/a.csv")).unwrap();
    assert!(csv.starts_with("t,mass,energy"));
    assert_eq!(csv.lines().count(), 7);
    let summary: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/a.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "completed");
}

#[test]
fn missing_grid_is_a_config_error_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small("a", dir.path());
    v.as_object_mut().unwrap().remove("grid");
    let cfg = write(dir.path(), "a.json", &v);
    let out = cqnls(&["run", &cfg]);
    assert_eq!(code(&out), 4);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("grid") && err.contains("line"), "{err}");
}

#[test]
fn out_of_range_interpolation_exponent_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small("a", dir.path());
    v["probes"] = json!([{
        "kind": "angular_interpolation",
        "parameters": {"b": 0.5, "epsilon": 0.5, "p": 2.0},
        "ensemble": {"generator": "gaussian", "count": 1}
    }]);
    let cfg = write(dir.path(), "a.json", &v);
    let out = cqnls(&["probe", &cfg]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
}

#[test]
fn failed_tolerance_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small("a", dir.path());
    v["template"] = json!("conservation");
    v["checks"] = json!({"energy_drift": 1e-30});
    let cfg = write(dir.path(), "a.json", &v);
    let out = cqnls(&["run", &cfg]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stdout).contains("first failed check"));
}

#[test]
fn focusing_collapse_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small("b", dir.path());
    v["grid"] = json!({"n_per_axis": 48, "half_length": 3.5});
    v["coefficients"] = json!({"lambda1": -1.0, "b1": 0.5, "lambda2": -1.0, "b2": 1.0});
    v["initial_datum"] = json!({"gaussian": {"amplitude": 2.5, "width": 1.0}});
    v["stepper"] = json!({"dt": 0.001, "t_end": 1.0, "adaptive": true, "max_phase": 0.05});
    let cfg = write(dir.path(), "b.json", &v);
    let out = cqnls(&["blowup", &cfg]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn seed_override_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small("p", dir.path());
    v["probes"] = json!([{
        "kind": "l_equivalence",
        "ensemble": {"generator": "harmonic_gaussians", "count": 3}
    }]);
    let cfg = write(dir.path(), "p.json", &v);
    let run = |seed: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = cqnls(&["--quiet", "--seed", seed, "--out-dir", out_dir.to_str().unwrap(), "probe", &cfg]);
        assert_eq!(code(&out), 0);
        std::fs::read(out_dir.join("p.probe-0-l_equivalence.json")).unwrap()
    };
    let a = run("11", "a");
    assert_eq!(a, run("11", "b"));
    assert_ne!(a, run("12", "c"));
}

#[test]
fn sweep_reports_the_worst_status() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s1.json", &small("s1", dir.path()));
    let mut bad = small("s2", dir.path());
    bad["stepper"]["dt"] = json!(-1.0);
    write(dir.path(), "s2.json", &bad);
    let pattern = dir.path().join("s*.json");
    let out = cqnls(&["--quiet", "sweep", pattern.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    assert!(dir.path().join("out/s1.csv").exists());

    let out = cqnls(&["sweep", dir.path().join("none*.json").to_str().unwrap()]);
    assert_eq!(code(&out), 4);
}
