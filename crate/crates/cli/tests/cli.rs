use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn attnspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attnspec"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("ATTNSPEC_OUT")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn raw_attention_at_zero_temperature_has_rank_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = attnspec(&["spectrum", "--model", "A", "--raw", "--beta", "0", "--d", "10", "--seeds", "2", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("spectrum_A.csv"));
    assert_eq!(rows.len(), 20);
    for r in &rows {
        let v: f64 = r[3].parse().unwrap();
        let expected = if r[2] == "1" { 1.0 } else { 0.0 };
        assert!((v - expected).abs() < 1e-12, "{r:?}");
    }
    for f in ["topk_A.csv", "histogram_A.csv", "summary_A.json", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn theory_reports_edge() {
    let dir = tempfile::tempdir().unwrap();
    let out = attnspec(&["theory", "--beta", "1", "--points", "50", "--out", path(dir.path())]);
    assert!(out.status.success());
    let edge: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("edge.json")).unwrap()).unwrap();
    let e2 = edge["edge"]["edge_squared"].as_f64().unwrap();
    assert!((e2 - 9.0095).abs() < 1e-3, "{e2}");
    let rows = csv_rows(&dir.path().join("density.csv"));
    assert_eq!(rows.len(), 50);

    let semi = tempfile::tempdir().unwrap();
    let out = attnspec(&["theory", "--a", "1", "--b", "0", "--points", "20", "--out", path(semi.path())]);
    assert!(out.status.success());
    let edge: serde_json::Value = serde_json::from_str(&fs::read_to_string(semi.path().join("edge.json")).unwrap()).unwrap();
    assert!((edge["edge"]["edge"].as_f64().unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn replay_reproduces_bytes() {
    let first = tempfile::tempdir().unwrap();
    let args = ["figures", "six-models", "--d", "40", "--seeds", "3", "--seed", "11", "--out", path(first.path())];
    assert!(attnspec(&args).status.success());
    let second = tempfile::tempdir().unwrap();
    let manifest = first.path().join("manifest.json");
    assert!(attnspec(&["replay", path(&manifest), "--out", path(second.path())]).status.success());
    let mut compared = 0;
    for entry in fs::read_dir(first.path()).unwrap() {
        let name = entry.unwrap().file_name();
        if name.to_str().unwrap().ends_with(".csv") {
            let a = fs::read(first.path().join(&name)).unwrap();
            let b = fs::read(second.path().join(&name)).unwrap();
            assert_eq!(a, b, "{name:?}");
            compared += 1;
        }
    }
    assert!(compared >= 2);
}

#[test]
fn thread_count_does_not_change_output() {
    let one = tempfile::tempdir().unwrap();
    let many = tempfile::tempdir().unwrap();
    for (dir, threads) in [(&one, "1"), (&many, "3")] {
        let args = ["--threads", threads, "spectrum", "--model", "Y", "--d", "30", "--seeds", "4", "--out", path(dir.path())];
        assert!(attnspec(&args).status.success());
    }
    assert_eq!(
        fs::read(one.path().join("spectrum_Y.csv")).unwrap(),
        fs::read(many.path().join("spectrum_Y.csv")).unwrap()
    );
}

#[test]
fn verify_bounds_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = attnspec(&["verify", "bounds", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.starts_with("PASS")));
    assert!(!stdout.contains("FAIL"));
    assert!(dir.path().join("verify_bounds.json").exists());
}

#[test]
fn bad_input_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = attnspec(&["spectrum", "--model", "Z", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Z"));
    let out = attnspec(&["spectrum", "--model", "Y", "--d", "0", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = attnspec(&["spectrum", "--model", "Y", "--d", "5", "--beta", "-1", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_attnspec"))
        .args(["theory", "--beta", "0.5", "--points", "10"])
        .env("ATTNSPEC_OUT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("edge.json").exists());
}
