//! Seeded synthetic wind panels with regional structure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Duration, Timelike};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::hierarchy::format_value;
use crate::panel::{format_timestamp, parse_timestamp, AssetMeta, AssetPanel};

use super::{PipelineError, SynthConfig};

/// Regions sit on a grid with this spacing in kilometres.
const REGION_SPACING_KM: f64 = 700.0;
/// Half-width of the jitter box around a region centre, in kilometres.
const REGION_JITTER_KM: f64 = 50.0;
const KM_PER_DEG: f64 = 111.195;
const BASE_LAT: f64 = 32.0;
const BASE_LON: f64 = -104.0;
const CAPACITY_RANGE_MW: (f64, f64) = (50.0, 200.0);

/// Grid rows stay below 60 degrees north for this many regions.
pub const MAX_REGIONS: usize = 16;

/// Generates the asset table and panel. A pure function of `cfg`.
pub fn synthesize(cfg: &SynthConfig) -> Result<AssetPanel, PipelineError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_assets;
    let r = cfg.n_regions;
    let cols = (r as f64).sqrt().ceil() as usize;

    let centres: Vec<(f64, f64)> = (0..r)
        .map(|g| {
            let lat = BASE_LAT + (g / cols) as f64 * REGION_SPACING_KM / KM_PER_DEG;
            let lon_step = REGION_SPACING_KM / (KM_PER_DEG * lat.to_radians().cos());
            (lat, BASE_LON + (g % cols) as f64 * lon_step)
        })
        .collect();

    // Pair p occupies assets 2p and 2p+1 and lives in region p mod R.
    let region_of = |i: usize| {
        if i < 2 * cfg.anticorrelated_pairs {
            (i / 2) % r
        } else {
            i % r
        }
    };

    let assets: Vec<AssetMeta> = (0..n)
        .map(|i| {
            let (lat, lon) = centres[region_of(i)];
            let dlat = rng.random_range(-1.0..=1.0) * REGION_JITTER_KM / KM_PER_DEG;
            let dlon = rng.random_range(-1.0..=1.0) * REGION_JITTER_KM / (KM_PER_DEG * lat.to_radians().cos());
            let cap = rng.random_range(CAPACITY_RANGE_MW.0..=CAPACITY_RANGE_MW.1);
            AssetMeta {
                asset_id: format!("wf{i:03}"),
                latitude_deg: round_to(lat + dlat, 1e-4),
                longitude_deg: round_to(lon + dlon, 1e-4),
                capacity_mw: round_to(cap, 0.1),
            }
        })
        .collect();

    let t = cfg.n_steps;
    let start = parse_timestamp(&cfg.start)?;
    let step = Duration::minutes(cfg.granularity_minutes);
    let timestamps: Vec<_> = (0..t).map(|s| start + step * s as i32).collect();

    // Region g decorrelates g+1 times as fast as the base process.
    let phi_of = |g: usize| cfg.ar_coefficient.powi(g as i32 + 1);
    let ar = |rng: &mut ChaCha8Rng, phis: &[f64]| -> DMatrix<f64> {
        let mut m = DMatrix::zeros(phis.len(), t);
        for (row, &phi) in phis.iter().enumerate() {
            let innov = (1.0 - phi * phi).sqrt();
            let mut v: f64 = rng.sample(StandardNormal);
            for s in 0..t {
                if s > 0 {
                    let e: f64 = rng.sample(StandardNormal);
                    v = phi * v + innov * e;
                }
                m[(row, s)] = v;
            }
        }
        m
    };
    let regional = ar(&mut rng, &(0..r).map(phi_of).collect::<Vec<_>>());
    let paired = ar(
        &mut rng,
        &(0..cfg.anticorrelated_pairs).map(|p| phi_of(p % r)).collect::<Vec<_>>(),
    );

    let diurnal: Vec<f64> = timestamps
        .iter()
        .map(|ts| {
            let hour = ts.hour() as f64 + ts.minute() as f64 / 60.0;
            cfg.seasonal_amplitude * (2.0 * std::f64::consts::PI * hour / 24.0).sin()
        })
        .collect();

    let mut values = DMatrix::zeros(n, t);
    for i in 0..n {
        let cap = assets[i].capacity_mw;
        for s in 0..t {
            let signal = if i < 2 * cfg.anticorrelated_pairs {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                sign * paired[(i / 2, s)]
            } else {
                regional[(region_of(i), s)]
            };
            let e: f64 = rng.sample(StandardNormal);
            let z = diurnal[s] + signal + cfg.noise_scale * e;
            let v = cap / (1.0 + (-z).exp());
            values[(i, s)] = round_to(v, 1e-6).clamp(0.0, cap);
        }
    }
    Ok(AssetPanel::new(assets, timestamps, values)?)
}

fn round_to(v: f64, q: f64) -> f64 {
    (v / q).round() * q
}

pub fn write_assets<W: Write>(panel: &AssetPanel, w: W) -> Result<(), PipelineError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["asset_id", "latitude_deg", "longitude_deg", "capacity_mw"])?;
    for a in panel.assets() {
        wtr.write_record([
            a.asset_id.clone(),
            format_value(a.latitude_deg),
            format_value(a.longitude_deg),
            format_value(a.capacity_mw),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_series<W: Write>(panel: &AssetPanel, w: W) -> Result<(), PipelineError> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["timestamp".to_string()];
    header.extend(panel.asset_ids());
    wtr.write_record(&header)?;
    let v = panel.values();
    for (s, ts) in panel.timestamps().iter().enumerate() {
        let mut rec = Vec::with_capacity(panel.n_assets() + 1);
        rec.push(format_timestamp(ts));
        rec.extend((0..panel.n_assets()).map(|i| format_value(v[(i, s)])));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `assets.csv` and `series.csv` into `dir`, returning both paths.
pub fn synth_to_dir(cfg: &SynthConfig, dir: &Path) -> Result<(PathBuf, PathBuf), PipelineError> {
    let panel = synthesize(cfg)?;
    fs::create_dir_all(dir)?;
    let assets = dir.join("assets.csv");
    let series = dir.join("series.csv");
    write_assets(&panel, fs::File::create(&assets)?)?;
    write_series(&panel, fs::File::create(&series)?)?;
    Ok((assets, series))
}
