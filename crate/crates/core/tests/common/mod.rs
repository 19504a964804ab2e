#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub const SYNTH_TOML: &str = r#"n_assets = 6
n_steps = 576
granularity_minutes = 15
start = "2021-01-01T00:00:00Z"
seed = 42
n_regions = 3
ar_coefficient = 0.97
seasonal_amplitude = 0.6
noise_scale = 0.3
anticorrelated_pairs = 1
output_dir = "data"
"#;

pub const RUN_TOML: &str = r#"task = "short_term"
history_len = 4
horizon = 8
granularity_minutes = 15
k = 3
criterion = "savar"
diameter_km = 500.0
fleet_model = "ridge"
bundle_model = "ridge"
asset_model = "ridge"
ridge_lambda = 1.0
use_calendar_encodings = false
train_start = "2021-01-01T00:00:00Z"
train_end = "2021-01-05T23:45:00Z"
test_start = "2021-01-06T00:00:00Z"
test_end = "2021-01-06T23:45:00Z"
seed = 1
assets_path = "data/assets.csv"
series_path = "data/series.csv"
output_dir = "out"
baseline = true
diameters = [100.0, 500.0, 1000.0, "unbounded"]
"#;

/// Writes both configs into `dir` and returns (synth.toml, run.toml).
pub fn write_configs(dir: &Path, run_toml: &str) -> (PathBuf, PathBuf) {
    let synth = dir.join("synth.toml");
    let run = dir.join("run.toml");
    fs::write(&synth, SYNTH_TOML).unwrap();
    fs::write(&run, run_toml).unwrap();
    (synth, run)
}

pub fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}
