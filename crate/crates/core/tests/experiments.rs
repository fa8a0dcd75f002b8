use std::fs;

use attnspec::experiments::{replay, run, Command, ExperimentManifest, Figure, RunSettings, MANIFEST_FILE};
use attnspec::models::{ModelConfig, ModelKind};

fn settings(d: usize, beta: f64) -> RunSettings {
    RunSettings {
        config: ModelConfig::square(d, beta),
        master_seed: 5,
        seeds: 3,
        ..RunSettings::default()
    }
}

fn csv_body(path: &std::path::Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn every_command_writes_its_manifest_outputs() {
    let commands = [
        (Command::Spectrum { model: ModelKind::YQlin, raw: false }, settings(30, 1.0)),
        (Command::Figures { figure: Figure::SixModels }, settings(30, 1.0)),
        (Command::Figures { figure: Figure::Topk }, settings(30, 1.0)),
        (Command::Figures { figure: Figure::Balance }, settings(30, 1.0)),
        (Command::Figures { figure: Figure::Poisson }, settings(30, 50.0)),
        (Command::Theory { a: 1.0, b: 1.0, beta: None, points: 20 }, RunSettings::default()),
    ];
    for (command, s) in commands {
        let dir = tempfile::tempdir().unwrap();
        let m = run(&command, &s, dir.path()).unwrap();
        assert!(!m.outputs.is_empty());
        for f in &m.outputs {
            assert!(dir.path().join(f).exists(), "{f} missing for {command:?}");
        }
        let loaded = ExperimentManifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(loaded.command, command);
        assert_eq!(loaded.seeds, (0..s.seeds as u64).collect::<Vec<_>>());
    }
}

#[test]
fn replay_is_byte_identical() {
    let first = tempfile::tempdir().unwrap();
    let m = run(&Command::Figures { figure: Figure::SixModels }, &settings(40, 1.0), first.path()).unwrap();
    let second = tempfile::tempdir().unwrap();
    replay(&m, second.path()).unwrap();
    for f in m.outputs.iter().filter(|f| f.ends_with(".csv")) {
        assert_eq!(fs::read(first.path().join(f)).unwrap(), fs::read(second.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn spectra_csv_has_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    run(&Command::Spectrum { model: ModelKind::Y, raw: false }, &settings(25, 1.0), dir.path()).unwrap();
    let rows = csv_body(&dir.path().join("spectrum_Y.csv"));
    assert_eq!(rows[0], ["model", "seed", "index", "value"]);
    assert_eq!(rows.len(), 1 + 3 * 25);
    for (i, r) in rows[1..].iter().enumerate() {
        assert_eq!(r[0], "Y");
        assert_eq!(r[1], (i / 25).to_string());
        assert_eq!(r[2], (i % 25 + 1).to_string());
    }
}

#[test]
fn histogram_masses_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    run(&Command::Spectrum { model: ModelKind::Aperp, raw: false }, &settings(30, 1.0), dir.path()).unwrap();
    let rows = csv_body(&dir.path().join("histogram_Aperp.csv"));
    assert_eq!(rows[0], ["bin_center", "mass"]);
    let total: f64 = rows[1..].iter().map(|r| r[1].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9, "{total}");
}
