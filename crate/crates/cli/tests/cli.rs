use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lqrecover::bounds::{lambda_default, TuningParams};
use lqrecover_cli::{main_with_args, MatrixFile, RunManifest};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lqrecover"));
    c.env_remove("LQRECOVER_JOBS");
    c
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["lqrecover"];
    full.extend_from_slice(args);
    let code = main_with_args(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap()
}

fn write_toy(dir: &Path) -> (String, String) {
    let x = dir.join("x.json");
    let y = dir.join("y.csv");
    fs::write(&x, r#"{"rows":2,"cols":3,"data":[2,3,1,2,1,3]}"#).unwrap();
    fs::write(&y, "# rows=2 cols=1\n2.05\n1.93\n").unwrap();
    (x.display().to_string(), y.display().to_string())
}

#[test]
fn solve_lasso_converges() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = write_toy(dir.path());
    let (code, out, _) = run(&["solve", "--design", &x, "--observation", &y, "--penalty", "l1", "--lambda", "0.1"]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert_eq!(v["converged"], true);
    assert_eq!(v["beta_hat"].as_array().unwrap().len(), 3);
}

#[test]
fn solve_auto_lambda_matches_the_rule() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = write_toy(dir.path());
    let (code, out, _) = run(&["solve", "--design", &x, "--observation", &y, "--q", "0.5", "--lambda", "auto", "--sigma", "0.1"]);
    assert_eq!(code, 0);
    let v = json(&out);
    let expect = lambda_default(&TuningParams { sigma: 0.1, m: 2, n: 3, a: 3.0, theta: 0.0, b: 0.0, r: 1.0, q: 0.5 })
        .unwrap()
        .lambda;
    assert_eq!(v["lambda"].as_f64().unwrap(), expect);
    assert_eq!(v["parameter_source"], "auto");
}

#[test]
fn solve_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (x, _) = write_toy(dir.path());
    let y3 = dir.path().join("y3.csv");
    fs::write(&y3, "# rows=3 cols=1\n1\n2\n3\n").unwrap();
    let (code, _, err) = run(&["solve", "--design", &x, "--observation", y3.to_str().unwrap(), "--lambda", "0.1"]);
    assert_eq!(code, 1);
    assert!(err.contains("2x3") && err.contains("3 entries"), "{err}");

    let (_, y) = write_toy(dir.path());
    let (code, out, _) =
        run(&["solve", "--design", &x, "--observation", &y, "--penalty", "l1", "--lambda", "1e-6", "--max-iters", "1"]);
    assert_eq!(code, 2);
    assert_eq!(json(&out)["converged"], false);

    assert_eq!(run(&["solve", "--no-such-flag"]).0, 1);
    assert_eq!(run(&["solve", "--design", &x, "--observation", &y, "--lambda", "auto"]).0, 1);
    assert_eq!(run(&["--help"]).0, 0);
}

#[test]
fn certify_example_design() {
    let (code, out, _) = run(&["certify", "--example1", "--q", "0.5", "--no-conditions"]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["rec"]["certified"], "POSITIVE");
    let (code, out, _) = run(&["certify", "--example1", "--q", "1"]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert_eq!(v["rec"]["certified"], "ZERO");
    let w: Vec<f64> = v["rec"]["witness"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    // parallel to the kernel direction (−2, 1, 1)
    let k = [-2.0, 1.0, 1.0];
    let dot: f64 = w.iter().zip(k).map(|(a, b)| a * b).sum();
    let nw = w.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!((dot.abs() / (nw * 6f64.sqrt()) - 1.0).abs() < 1e-6);
}

#[test]
fn certify_identity() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("eye.csv");
    MatrixFile::from_matrix(&DMatrix::identity(4, 4)).write(&p).unwrap();
    let (code, out, _) = run(&["certify", "--design", p.to_str().unwrap(), "--q", "1", "--s", "1", "--t", "1", "--a", "1"]);
    assert_eq!(code, 0);
    assert!(json(&out)["rec"]["modulus_upper"].as_f64().unwrap() >= 1.0 - 1e-6);
}

#[test]
fn bounds_lambda() {
    let (code, out, _) = run(&["bounds", "--q", "1", "--a", "3", "--sigma", "0.01", "--m", "100", "--n", "1024"]);
    assert_eq!(code, 0);
    let lam = json(&out)["bounds"]["lambda"].as_f64().unwrap();
    // 2·0.01·√(2 ln 1024 / 100)
    let oracle = 2.0 * 0.01 * (2.0 * 1024f64.ln() / 100.0).sqrt();
    assert!((lam - oracle).abs() < 1e-15);
    assert!((lam - 0.0074468).abs() < 1e-6);
}

fn small_sweep(dir: &Path, jobs: &str) -> Output {
    bin()
        .args([
            "sweep", "--n", "24", "--s", "3", "--sample-sizes", "12,20", "--trials", "3", "--methods", "l1,half,cp:1/2",
            "--folds", "3", "--seed", "5", "--jobs", jobs, "--out-dir",
        ])
        .arg(dir)
        .output()
        .unwrap()
}

#[test]
fn sweep_outputs_are_deterministic_and_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(small_sweep(a.path(), "1").status.success());
    assert!(small_sweep(b.path(), "4").status.success());
    for f in ["trials.csv", "aggregate.csv", "tables.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let agg = fs::read_to_string(a.path().join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 1 + 2 * 3);

    let man = RunManifest::read(&a.path().join("manifest.json")).unwrap();
    assert!(man.verify());
    assert_eq!(man.jobs, Some(1));
    assert_eq!(man.outputs.len(), 4);
    assert!(man.outputs.iter().all(|p| p.exists()));

    // re-running from the manifest reproduces the CSVs
    let c = tempfile::tempdir().unwrap();
    let st = bin()
        .args(["sweep", "--config"])
        .arg(a.path().join("manifest.json"))
        .arg("--out-dir")
        .arg(c.path())
        .status()
        .unwrap();
    assert!(st.success());
    assert_eq!(fs::read(a.path().join("aggregate.csv")).unwrap(), fs::read(c.path().join("aggregate.csv")).unwrap());

    // tables rebuilt from the reports match
    let (code, out, _) = run(&["tables", "--reports", a.path().join("reports.json").to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(out, fs::read_to_string(a.path().join("tables.csv")).unwrap());
}

#[test]
fn jobs_fall_back_to_environment() {
    let d = tempfile::tempdir().unwrap();
    let st = bin()
        .env("LQRECOVER_JOBS", "2")
        .args(["example1", "--draws", "3", "--num-lambdas", "4", "--out-dir"])
        .arg(d.path())
        .status()
        .unwrap();
    assert!(st.success());
    assert_eq!(RunManifest::read(&d.path().join("manifest.json")).unwrap().jobs, Some(2));
}

#[test]
fn example1_writes_one_row_per_lambda() {
    let d = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&["example1", "--draws", "4", "--out-dir", d.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(d.path().join("coverage.csv")).unwrap();
    assert_eq!(csv.lines().count(), 26);
    assert!(csv.lines().skip(1).all(|l| l.ends_with("NOT-APPLICABLE")));
}

#[test]
fn tampered_manifest_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("manifest.json");
    let mut m = RunManifest::new("sweep", &lqrecover::experiments::ExperimentConfig::paper(), 0, None, 0.0).unwrap();
    m.config["n"] = serde_json::json!(8);
    fs::write(&p, serde_json::to_string(&m).unwrap()).unwrap();
    let (code, _, err) = run(&["sweep", "--config", p.to_str().unwrap(), "--out-dir", d.path().to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("hash"));
}

proptest! {
    #[test]
    fn matrix_csv_round_trips(rows in 1usize..5, cols in 1usize..5, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(rows, cols, |_, _| {
            let mant: f64 = rng.random_range(-1.0..1.0);
            mant * 10f64.powi(rng.random_range(-300..300))
        });
        let f = MatrixFile::from_matrix(&m);
        prop_assert_eq!(MatrixFile::parse_csv(&f.to_csv()).unwrap().to_matrix().unwrap(), m.clone());
        let back: MatrixFile = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        prop_assert_eq!(back.to_matrix().unwrap(), m);
    }
}
