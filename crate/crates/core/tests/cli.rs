use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use polynorta::fit_pwm::{fit_pwm_sample, PwmFitOptions};
use polynorta::PolynomialModel;
use serde_json::{json, Value};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polynorta"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}):\n{}\nstderr:\n{}",
            String::from_utf8_lossy(&o.stdout),
            String::from_utf8_lossy(&o.stderr)
        )
    })
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn lognormal_taylor_model() -> Value {
    let mut c = vec![1.0f64];
    for k in 1..=11 {
        c.push(c[k - 1] / k as f64);
    }
    json!({
        "degree": 11,
        "coeffs": c.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>(),
        "fit_method": "exact"
    })
}

fn write_spec(dir: &Path, name: &str, spec: &Value) -> String {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(spec).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn pair_spec(rho: f64, count: usize) -> Value {
    json!({
        "schema_version": 1,
        "marginals": [
            { "label": "x", "distribution": { "family": "gamma", "params": [2.0, 1.5] } },
            { "label": "y", "model": lognormal_taylor_model() }
        ],
        "correlation": [[1.0, rho], [rho, 1.0]],
        "generation": { "count": count, "seed": 42 }
    })
}

#[test]
fn fit_writes_a_model_and_report() {
    let dir = TempDir::new().unwrap();
    let model_path = dir.path().join("beta.json");
    let o = run(&["fit", "--dist", "beta:2,2", "--degree", "5", "--out", path_str(&model_path)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["command"], "fit");
    assert_eq!(v["model"]["degree"], 5);
    assert_eq!(v["monotone"], true);
    let eps_max = v["fit_report"]["eps_max"].as_f64().unwrap();
    assert!((eps_max - 54.0).abs() < 1.0, "{eps_max}");
    let m = PolynomialModel::from_json(&fs::read_to_string(&model_path).unwrap()).unwrap();
    assert_eq!(m.degree(), 5);
    assert!((m.coeffs()[0] - 0.5).abs() < 1e-9);
}

#[test]
fn percentile_fit_then_validate() {
    let dir = TempDir::new().unwrap();
    let model_path = dir.path().join("ln.json");
    let points = dir.path().join("points.csv");
    let o = run(&[
        "fit",
        "--dist",
        "lognormal:0,1",
        "--method",
        "percentile",
        "--degree",
        "11",
        "--out",
        path_str(&model_path),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&[
        "validate",
        "--model",
        path_str(&model_path),
        "--dist",
        "lognormal:0,1",
        "--grid",
        "500",
        "--points",
        path_str(&points),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["schema_version"], 1);
    let csv = fs::read_to_string(&points).unwrap();
    assert!(csv.starts_with("p,x_p,x_p_star,eps_percent\n"));
    assert_eq!(csv.lines().count(), 501);
}

#[test]
fn fit_from_sample_matches_library() {
    let dir = TempDir::new().unwrap();
    let sample: Vec<f64> = (0..400).map(|i| ((i as f64) * 0.731).sin().exp()).collect();
    let mut text = String::from("id,value\n");
    for (i, v) in sample.iter().enumerate() {
        text.push_str(&format!("{i},{v:.17e}\n"));
    }
    let csv = dir.path().join("sample.csv");
    fs::write(&csv, text).unwrap();
    let model_path = dir.path().join("m.json");
    let o = run(&[
        "fit",
        "--sample",
        path_str(&csv),
        "--column",
        "value",
        "--degree",
        "4",
        "--out",
        path_str(&model_path),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = PolynomialModel::from_json(&fs::read_to_string(&model_path).unwrap()).unwrap();
    let lib = fit_pwm_sample(&sample, 4, PwmFitOptions::default()).unwrap();
    assert_eq!(m.coeffs(), lib.model.coeffs());
}

#[test]
fn rho_pair_and_infeasible_exit_code() {
    let dir = TempDir::new().unwrap();
    let m = dir.path().join("ln.json");
    fs::write(&m, serde_json::to_string(&lognormal_taylor_model()).unwrap()).unwrap();
    let o = run(&["rho", "--model1", path_str(&m), "--model2", path_str(&m), "--rho-x", "-0.3,0.5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    let text = v.to_string();
    assert!(text.contains("rho_z"), "{text}");
    let o = run(&["rho", "--model1", path_str(&m), "--model2", path_str(&m), "--rho-x", "-0.9"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible"));
}

#[test]
fn gen_is_byte_identical_for_a_seed() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), "spec.json", &pair_spec(0.6, 5000));
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    for (out, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        let o = run(&["gen", "--spec", &spec, "--seed", seed, "--out", path_str(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b, c) = (fs::read(&a).unwrap(), fs::read(&b).unwrap(), fs::read(&c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y"));
    assert_eq!(lines.count(), 5000);
}

#[test]
fn gen_report_tracks_target_correlation() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), "spec.json", &pair_spec(0.6, 200_000));
    let out = dir.path().join("s.csv");
    let o = run(&["gen", "--spec", &spec, "--out", path_str(&out), "--report"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["count"], 200_000);
    let r = v["sample_correlation"][0][1].as_f64().unwrap();
    assert!((r - 0.6).abs() < 0.01, "{r}");
}

#[test]
fn non_positive_definite_needs_opt_in() {
    let dir = TempDir::new().unwrap();
    let m = lognormal_taylor_model();
    let r = -0.3;
    let spec = json!({
        "schema_version": 1,
        "marginals": [
            { "label": "a", "model": m },
            { "label": "b", "model": m },
            { "label": "c", "model": m }
        ],
        "correlation": [[1.0, r, r], [r, 1.0, r], [r, r, 1.0]],
        "generation": { "count": 100 }
    });
    let spec = write_spec(dir.path(), "spec.json", &spec);
    let o = run(&["rho", "--spec", &spec]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["rho", "--spec", &spec, "--nearest-pd"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["repaired"], true);
}

#[test]
fn schema_and_io_errors_exit_4() {
    let dir = TempDir::new().unwrap();
    let mut spec = pair_spec(0.5, 10);
    spec["colour"] = json!("blue");
    let spec = write_spec(dir.path(), "bad.json", &spec);
    let o = run(&["gen", "--spec", &spec]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));

    let mut asym = pair_spec(0.5, 10);
    asym["correlation"] = json!([[1.0, 0.5], [0.4, 1.0]]);
    let asym = write_spec(dir.path(), "asym.json", &asym);
    let o = run(&["gen", "--spec", &asym]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("correlation"));

    let missing = dir.path().join("missing.json");
    assert_eq!(code(&run(&["gen", "--spec", path_str(&missing)])), 4);
    assert_eq!(code(&run(&["fit", "--dist", "beta:2"])), 4);
    assert_eq!(code(&run(&["validate", "--fixture", "no-such-fixture"])), 4);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&run(&["fit"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn bundled_fixtures_run() {
    let o = run(&["validate", "--fixture", "lognormal-pair-rho"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let v = stdout_json(&o);
    assert_eq!(v["fixture"]["pass"], true);
    assert_eq!(v["fixture"]["checks"].as_array().unwrap().len(), 7);
    let o = run(&["validate", "--fixture", "pwm-determinants"]);
    assert_eq!(code(&o), 0);
}
