use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bomca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bomca")).args(args).output().expect("binary runs")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_accepts_shipped_configs() {
    for name in ["free.toml", "harmonic.toml", "eckart_n1.toml", "eckart_n2.toml"] {
        let out = bomca(&["validate", config(name).to_str().unwrap()]);
        assert!(out.status.success(), "{name}: {}", stderr(&out));
    }
}

#[test]
fn validate_rejects_zero_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("free.toml")).unwrap().replace("truncation = 1", "truncation = 0");
    let path = dir.path().join("bad.toml");
    fs::write(&path, text).unwrap();
    let out = bomca(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("`truncation`"), "{}", stderr(&out));
}

#[test]
fn missing_config_is_a_validation_failure() {
    let out = bomca(&["validate", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_is_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("free.toml");
    for dir in [&a, &b] {
        let out = bomca(&["run", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--threads", "2"]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let mut csvs: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n.to_string_lossy().ends_with(".csv"))
        .collect();
    csvs.sort();
    assert!(csvs.len() >= 5, "{csvs:?}");
    for name in csvs {
        let x = fs::read(a.path().join(&name)).unwrap();
        let y = fs::read(b.path().join(&name)).unwrap();
        assert_eq!(x, y, "{name:?} differs between runs");
    }
}

#[test]
fn run_emits_every_branch_in_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = bomca(&["run", config("harmonic.toml").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let csv = fs::read_to_string(dir.path().join("branches.csv")).unwrap();
    let mut header = csv.lines().next().unwrap().split(',');
    assert_eq!(header.next(), Some("branch_id"));
    let ids: std::collections::BTreeSet<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    let reported = report["branches"].as_array().unwrap();
    assert_eq!(ids.len(), reported.len());
    for b in reported {
        assert!(ids.contains(b["id"].to_string().as_str()));
        assert!(dir.path().join(b["file"].as_str().unwrap()).exists());
    }
    for f in report["files"].as_array().unwrap() {
        assert!(dir.path().join(f.as_str().unwrap()).exists(), "{f}");
    }
}

#[test]
fn scan_prints_roots() {
    let out = bomca(&["scan", config("free.toml").to_str().unwrap(), "--xf", "-0.5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("x_f = -0.5: 1 roots"), "{text}");
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn oracle_writes_reference_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = bomca(&["oracle", config("harmonic.toml").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("psi_exact.csv").exists());
    assert!(dir.path().join("qpotential.csv").exists());
}
