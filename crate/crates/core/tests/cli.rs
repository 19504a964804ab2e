mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bpr_core::bundling::Bundling;
use bpr_core::hierarchy::{HierarchyForecast, HierarchyLayout};
use bpr_core::panel::ingest_panel;

fn bpr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpr")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Temp dir holding both configs and the synthetic data.
fn workspace(run_toml: &str) -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    common::write_configs(tmp.path(), run_toml);
    ok(&bpr(&["synth", "--config", "synth.toml"], tmp.path()));
    tmp
}

fn read_hierarchy(dir: &Path, file: &str, root: &Path) -> (Bundling, HierarchyForecast) {
    let panel = ingest_panel(&root.join("data/assets.csv"), &root.join("data/series.csv")).unwrap();
    let b = Bundling::read_csv(fs::File::open(dir.join("bundling.csv")).unwrap(), &panel.asset_ids()).unwrap();
    let layout = HierarchyLayout::from_bundling(&b);
    let h = HierarchyForecast::read_csv(fs::File::open(dir.join(file)).unwrap(), &layout).unwrap();
    (b, h)
}

#[test]
fn run_writes_coherent_outputs() {
    let tmp = workspace(common::RUN_TOML);
    let out = bpr(&["run", "--config", "run.toml"], tmp.path());
    ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("reconciled") && stdout.contains("baseline"));

    let dir = tmp.path().join("out");
    for f in ["bundling.csv", "forecasts.csv", "reconciled.csv", "report.csv", "diagnostics.csv", "manifest.json", "comparison.csv"] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let (b, rec) = read_hierarchy(&dir, "reconciled.csv", tmp.path());
    let fleet_cap: f64 = 6.0 * 200.0;
    assert!(rec.max_incoherence(&b) <= 1e-9 * fleet_cap);

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert!(!manifest["modules"].as_array().unwrap().is_empty());
}

#[test]
fn staged_commands_match_run() {
    let tmp = workspace(common::RUN_TOML);
    ok(&bpr(&["run", "--config", "run.toml", "--out", "full"], tmp.path()));
    for cmd in ["bundle", "forecast", "reconcile", "evaluate"] {
        ok(&bpr(&[cmd, "--config", "run.toml", "--out", "staged"], tmp.path()));
    }
    let full = tmp.path().join("full");
    let staged = tmp.path().join("staged");
    for f in ["bundling.csv", "forecasts.csv", "insample_moments.csv"] {
        assert_eq!(fs::read(full.join(f)).unwrap(), fs::read(staged.join(f)).unwrap(), "{f}");
    }
    // Staged reconciliation reads 12-digit CSVs, so compare numerically.
    let (_, a) = read_hierarchy(&full, "reconciled.csv", tmp.path());
    let (b, s) = read_hierarchy(&staged, "reconciled.csv", tmp.path());
    let diff = a.blocks().iter().zip(s.blocks()).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max);
    assert!(diff < 1e-6, "{diff}");
    assert!(s.max_incoherence(&b) < 1e-9 * 1200.0);
    assert!(staged.join("report.csv").is_file());
}

#[test]
fn sweep_writes_both_criteria() {
    let tmp = workspace(common::RUN_TOML);
    ok(&bpr(&["sweep", "--config", "run.toml"], tmp.path()));
    let text = fs::read_to_string(tmp.path().join("out/sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("diameter_km,criterion,objective,feasible"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().filter(|r| r.contains(",imcy,")).count() == 4);
    assert!(rows[3].starts_with("unbounded,imcy,") && rows[3].ends_with(",true"), "{}", rows[3]);
    for r in &rows {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f.len(), 4);
        assert_eq!(f[2].is_empty(), f[3] == "false");
    }
}

#[test]
fn single_bundle_and_persistence() {
    let toml = common::RUN_TOML
        .replace("k = 3", "k = 1")
        .replace("diameter_km = 500.0", "diameter_km = \"unbounded\"")
        .replace("= \"ridge\"", "= \"persistence\"");
    let tmp = workspace(&toml);
    ok(&bpr(&["run", "--config", "run.toml"], tmp.path()));
    let dir = tmp.path().join("out");
    let csv = fs::read_to_string(dir.join("bundling.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with("0,")));

    let (b, raw) = read_hierarchy(&dir, "forecasts.csv", tmp.path());
    let (_, rec) = read_hierarchy(&dir, "reconciled.csv", tmp.path());
    assert_eq!(raw.layout().n_rows(), 6 + 2);
    assert_eq!(b.k(), 1);
    let diff = raw.blocks().iter().zip(rec.blocks()).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max);
    assert!(diff <= 1e-9 * 1200.0, "{diff}");
}

#[test]
fn errors_carry_stage_and_clean_up() {
    let tmp = workspace(common::RUN_TOML);

    let out = bpr(&["run", "--config", "missing.toml"], tmp.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("[config]"), "{}", stderr(&out));

    fs::write(tmp.path().join("bad.toml"), common::RUN_TOML.replace("data/series.csv", "nope.csv")).unwrap();
    let out = bpr(&["run", "--config", "bad.toml", "--out", "bad"], tmp.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("[ingest]"), "{}", stderr(&out));
    assert!(!tmp.path().join("bad").exists());

    // Two bundles cannot cover three regions under a 500 km cap.
    fs::write(tmp.path().join("tight.toml"), common::RUN_TOML.replace("k = 3", "k = 2")).unwrap();
    let out = bpr(&["run", "--config", "tight.toml", "--out", "tight"], tmp.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("[bundle]"), "{}", stderr(&out));
    assert!(!tmp.path().join("tight").exists());

    let out = bpr(&["reconcile", "--config", "run.toml", "--out", "empty"], tmp.path());
    assert!(!out.status.success());

    fs::write(tmp.path().join("extra.toml"), format!("{}unknown_key = 1\n", common::RUN_TOML)).unwrap();
    let out = bpr(&["bundle", "--config", "extra.toml"], tmp.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("[config]"));
}

#[test]
fn repeated_runs_are_identical() {
    let tmp = workspace(common::RUN_TOML);
    ok(&bpr(&["run", "--config", "run.toml", "--out", "a"], tmp.path()));
    ok(&bpr(&["run", "--config", "run.toml", "--out", "b"], tmp.path()));
    assert_eq!(common::read_tree(&tmp.path().join("a")), common::read_tree(&tmp.path().join("b")));
}
