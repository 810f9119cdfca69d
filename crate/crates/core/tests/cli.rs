use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn greenwalk(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_greenwalk"));
    cmd.args(args);
    match seed {
        Some(s) => cmd.env("GREENWALK_SEED", s),
        None => cmd.env_remove("GREENWALK_SEED"),
    };
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const GREEN_COMPARE: &str = r#"{
  "schema_version": 1,
  "experiment": "green-compare",
  "kernel": {"family": "gaussian", "dim": 3},
  "grid": {"N": 32, "L": 16.0},
  "output": "green_compare"
}"#;

const MC_POTENTIAL: &str = r#"{
  "schema_version": 1,
  "experiment": "mc-potential",
  "kernel": {"family": "gaussian", "dim": 3},
  "grid": {"N": 32, "L": 16.0},
  "function": {"family": "kernel_density"},
  "mc": {"n": 500, "seed": 5},
  "horizons": {"T": 20.0},
  "output": "mc/potential"
}"#;

#[test]
fn green_compare_columns_and_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "green_compare.json", GREEN_COMPARE);
    let out = greenwalk(&["run", &cfg, "--out", dir.path().to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("green_compare.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["x", "G0_series", "G0_fourier", "rel_diff"]);
    let mut rows = 0;
    for rec in rdr.records() {
        let rel: f64 = rec.unwrap()[3].parse().unwrap();
        assert!(rel < 1e-2);
        rows += 1;
    }
    assert!(rows >= 4);
    assert!(dir.path().join("green_compare.manifest.json").exists());
}

#[test]
fn divergent_potential_exit_code_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.json",
        r#"{"schema_version": 1, "experiment": "potential",
            "kernel": {"family": "gaussian", "dim": 1}, "grid": {"N": 256, "L": 32.0},
            "function": {"family": "kernel_density"}, "output": "p"}"#,
    );
    let out = greenwalk(&["run", &cfg, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(err["error"], "divergent_green_measure");
    assert!(err["message"].as_str().unwrap().contains("diverges"));
    assert!(!dir.path().join("p.csv").exists());
}

#[test]
fn seeded_runs_are_byte_identical_and_manifests_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "mc.json", MC_POTENTIAL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for (d, threads) in [(&a, "1"), (&b, "2")] {
        let out = greenwalk(&["run", &cfg, "--threads", threads, "--out", d.to_str().unwrap()], None);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |d: &Path, f: &str| std::fs::read(d.join("mc").join(f)).unwrap();
    assert_eq!(read(&a, "potential.csv"), read(&b, "potential.csv"));
    assert_eq!(read(&a, "potential.json"), read(&b, "potential.json"));

    let manifest = a.join("mc").join("potential.manifest.json");
    let out = greenwalk(&["run", manifest.to_str().unwrap(), "--out", c.to_str().unwrap()], None);
    assert!(out.status.success());
    assert_eq!(read(&a, "potential.csv"), read(&c, "potential.csv"));
    assert_eq!(read(&a, "potential.manifest.json"), read(&c, "potential.manifest.json"));
}

#[test]
fn seed_environment_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "mc.json", MC_POTENTIAL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(greenwalk(&["run", &cfg, "--out", a.to_str().unwrap()], None).status.success());
    assert!(greenwalk(&["run", &cfg, "--out", b.to_str().unwrap()], Some("6")).status.success());
    let csv_a = std::fs::read(a.join("mc/potential.csv")).unwrap();
    let csv_b = std::fs::read(b.join("mc/potential.csv")).unwrap();
    assert_ne!(csv_a, csv_b);
    let m: Value = serde_json::from_slice(&std::fs::read(b.join("mc/potential.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["mc"]["seed"], 6);
    let bad = greenwalk(&["validate", &cfg], Some("minus one"));
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn list_is_stable_and_every_example_validates() {
    let first = greenwalk(&["list"], None);
    let second = greenwalk(&["list"], None);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert!(names.len() >= 13);
    let dir = tempfile::tempdir().unwrap();
    for name in names {
        let ex = greenwalk(&["example", name], None);
        assert!(ex.status.success());
        let cfg = write(dir.path(), &format!("{name}.json"), &String::from_utf8(ex.stdout).unwrap());
        let v = greenwalk(&["validate", &cfg], None);
        assert!(v.status.success(), "{name}: {}", String::from_utf8_lossy(&v.stdout));
    }
}

#[test]
fn config_errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let unknown_key = write(
        dir.path(),
        "u.json",
        r#"{"schema_version": 1, "experiment": "gfd", "subordinator": {"family": "stable", "alpha": 0.5},
            "output": "g", "colour": "blue"}"#,
    );
    let out = greenwalk(&["validate", &unknown_key], None);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(err["error"], "config");

    let unknown_exp = write(dir.path(), "x.json", r#"{"schema_version": 1, "experiment": "teleport", "output": "t"}"#);
    let out = greenwalk(&["run", &unknown_exp], None);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(err["error"], "unknown_experiment");
}

#[test]
fn gamma_renorm_curve_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "r.json",
        r#"{"schema_version": 1, "experiment": "renorm-curve",
            "kernel": {"family": "gaussian", "dim": 3}, "grid": {"N": 32, "L": 16.0},
            "subordinator": {"family": "gamma", "a": 1.0, "b": 1.0},
            "function": {"family": "kernel_density"}, "horizons": {"T_grid": [10.0, 100.0]},
            "output": "r"}"#,
    );
    let out = greenwalk(&["run", &cfg, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(4));
}
