use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fkdmc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fkdmc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = fkdmc(dir, args);
    assert!(
        out.status.success(),
        "fkdmc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Paths after "wrote" in the command output.
fn written(stdout: &str) -> Vec<PathBuf> {
    stdout.lines().filter_map(|l| l.trim().strip_prefix("wrote ")).map(PathBuf::from).collect()
}

fn json(dir: &Path, stdout: &str) -> Value {
    let path = written(stdout).into_iter().find(|p| p.extension().is_some_and(|e| e == "json")).unwrap();
    serde_json::from_str(&fs::read_to_string(dir.join(path)).unwrap()).unwrap()
}

const SCALAR: &str = "[model]\ndimension = 1\na = [{a}]\nb = [1.0]\ns = [1.0]\n";

fn scalar(a: f64) -> String {
    SCALAR.replace("{a}", &a.to_string())
}

#[test]
fn exact_ground_state_of_memoryless_kernel() {
    // A = 0: S_inf = S, E0 = (1 + BS)^{-1/2} = 1/sqrt(2).
    let dir = TempDir::new().unwrap();
    write(dir.path(), "c.toml", &scalar(0.0));
    let stdout = run_ok(dir.path(), &["exact", "--config", "c.toml", "--out", "out"]);
    let doc = json(dir.path(), &stdout);
    let e0 = doc["result"]["e0"].as_f64().unwrap();
    assert!((e0 - 0.5f64.sqrt()).abs() < 1e-15, "{e0}");
    assert_eq!(doc["result"]["s_inf"][0].as_f64(), Some(1.0));
    assert_eq!(doc["subcommand"], "exact");
    assert_eq!(doc["config_hash"].as_str().unwrap().len(), 16);
}

#[test]
fn outputs_are_reproducible_and_carry_provenance() {
    let dir = TempDir::new().unwrap();
    let config = format!("seed = 11\n{}[initial]\nmean = [2.0]\ncov = [0.5]\n[run]\nwalkers = 3000\nsteps = 25\nburn_in = 10\n", scalar(0.6));
    write(dir.path(), "c.toml", &config);
    let first = run_ok(dir.path(), &["dmc", "--config", "c.toml", "--out", "a", "--threads", "1"]);
    let second = run_ok(dir.path(), &["dmc", "--config", "c.toml", "--out", "b", "--threads", "3"]);
    let (fa, fb) = (written(&first), written(&second));
    assert_eq!(fa.len(), 2);
    for (a, b) in fa.iter().zip(&fb) {
        assert_eq!(a.file_name(), b.file_name());
        assert_eq!(fs::read(dir.path().join(a)).unwrap(), fs::read(dir.path().join(b)).unwrap(), "{a:?}");
    }

    let csv_path = fa.iter().find(|p| p.extension().is_some_and(|e| e == "csv")).unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join(csv_path)).unwrap();
    let header = reader.headers().unwrap().clone();
    assert_eq!(&header[0], "config_hash");
    assert_eq!(&header[1], "seed");
    assert_eq!(&header[2], "version");
    let hash = csv_path.file_stem().unwrap().to_str().unwrap().strip_prefix("dmc-").unwrap().to_string();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 26);
    for row in &rows {
        assert_eq!(&row[0], hash);
        assert_eq!(&row[1], "11");
        assert_eq!(&row[2], env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn seed_flag_overrides_config_and_hash() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "c.toml", &scalar(0.5));
    let a = run_ok(dir.path(), &["exact", "--config", "c.toml", "--out", "o"]);
    let b = run_ok(dir.path(), &["exact", "--config", "c.toml", "--out", "o", "--seed", "9"]);
    assert_ne!(written(&a), written(&b));
    assert_eq!(json(dir.path(), &b)["seed"], 9);
}

#[test]
fn malformed_matrix_is_a_config_error_naming_the_field() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "c.toml", "[model]\ndimension = 2\na = [1.0, 0.0, 0.0]\nb = [1.0, 0.0, 0.0, 1.0]\ns = [1.0, 0.0, 0.0, 1.0]\n");
    let out = fkdmc(dir.path(), &["exact", "--config", "c.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("field `a`"), "{err}");
}

#[test]
fn unknown_key_reports_its_line() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "c.toml", &format!("{}[run]\nwalkers = 10\nstep = 5\n", scalar(0.5)));
    let out = fkdmc(dir.path(), &["dmc", "--config", "c.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 8") && err.contains("step"), "{err}");
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(fkdmc(dir.path(), &["exact"]).status.code(), Some(2));
}

#[test]
fn orthogonal_rotation_is_not_stable() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "c.toml",
        "[model]\ndimension = 2\na = [0.6, -0.8, 0.8, 0.6]\nb = [1.0, 0.0, 0.0, 1.0]\ns = [1.0, 0.0, 0.0, 1.0]\n",
    );
    let doc = json(dir.path(), &run_ok(dir.path(), &["stability", "--config", "c.toml"]));
    assert_eq!(doc["result"]["holds"], false);
}

#[test]
fn contraction_is_stable() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "c.toml", &scalar(0.5));
    let doc = json(dir.path(), &run_ok(dir.path(), &["stability", "--config", "c.toml"]));
    assert_eq!(doc["result"]["holds"], true);
    assert!((doc["result"]["rho"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn divergence_is_flagged_for_expanding_mean() {
    let dir = TempDir::new().unwrap();
    let config = format!("seed = 4\n{}[initial]\nmean = [20.0]\ncov = [1.0]\n[diverge]\nreps = 60\n", scalar(1.2));
    write(dir.path(), "c.toml", &config);
    let doc = json(dir.path(), &run_ok(dir.path(), &["diverge", "--config", "c.toml"]));
    assert_eq!(doc["result"]["growth"], true);
    assert!(doc["result"]["ratio"].as_f64().unwrap() >= 10.0);
}

#[test]
fn sweep_recovers_square_root_rate() {
    let dir = TempDir::new().unwrap();
    let config = format!(
        "seed = 21\n{}[initial]\nmean = [1.0]\ncov = [1.0]\n[run]\nsteps = 60\nreps = 16\nburn_in = 30\n",
        scalar(0.5)
    );
    write(dir.path(), "c.toml", &config);
    let doc = json(dir.path(), &run_ok(dir.path(), &["sweep", "--config", "c.toml"]));
    let slope = doc["result"]["slope"].as_f64().unwrap();
    assert!((slope + 0.5).abs() < 0.15, "slope {slope}");
    assert_eq!(doc["result"]["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn importance_finds_smallest_stable_block() {
    // A = 1.5, B = S = 1: A_k' S_k A_k < S_k first holds at k = 3.
    let dir = TempDir::new().unwrap();
    let config = format!("{}[run]\nwalkers = 500\nsteps = 10\nreps = 4\n", scalar(1.5));
    write(dir.path(), "c.toml", &config);
    let doc = json(dir.path(), &run_ok(dir.path(), &["importance", "--config", "c.toml"]));
    assert_eq!(doc["result"]["k"], 3);
    assert!(doc["result"]["stability_gap"].as_f64().unwrap() > 0.0);
}

#[test]
fn distinct_exit_codes() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "nok.toml", &format!("{}[importance]\nk_max = 2\n", scalar(1.5)));
    assert_eq!(fkdmc(dir.path(), &["importance", "--config", "nok.toml"]).status.code(), Some(5));

    write(dir.path(), "nc.toml", &format!("{}[exact]\nmax_iter = 2\n", scalar(0.5)));
    assert_eq!(fkdmc(dir.path(), &["exact", "--config", "nc.toml"]).status.code(), Some(4));

    // Walkers overflow to infinity within a few steps.
    let blowup = format!("{}[initial]\nmean = [1e300]\ncov = [1.0]\n[run]\nwalkers = 10\nsteps = 5\n", scalar(1e10));
    write(dir.path(), "inf.toml", &blowup);
    let out = fkdmc(dir.path(), &["dmc", "--config", "inf.toml"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
