//! Stacked fleet / bundle / asset forecasts and their CSV encoding.
//!
//! Row `0` is the fleet total, rows `1..=K` the bundles, rows `K+1..` the
//! assets. This is the row order of the summing matrix.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use nalgebra::DMatrix;
use thiserror::Error;

use crate::bundling::Bundling;
use crate::panel::{format_timestamp, parse_timestamp, AssetPanel, PanelError};

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("NaN at origin {origin}, row {row}, lead {lead}")]
    NotANumber { origin: usize, row: usize, lead: usize },
    #[error("malformed forecast file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Timestamp(#[from] PanelError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Fleet,
    Bundle,
    Asset,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Fleet, Level::Bundle, Level::Asset];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Fleet => "fleet",
            Level::Bundle => "bundle",
            Level::Asset => "asset",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fleet" => Ok(Level::Fleet),
            "bundle" => Ok(Level::Bundle),
            "asset" => Ok(Level::Asset),
            other => Err(format!("unknown level {other:?}")),
        }
    }
}

/// Row bookkeeping for an `(N + K + 1)`-row hierarchy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyLayout {
    asset_ids: Vec<String>,
    k: usize,
}

impl HierarchyLayout {
    pub fn new(asset_ids: Vec<String>, k: usize) -> Self {
        Self { asset_ids, k }
    }

    pub fn from_bundling(b: &Bundling) -> Self {
        Self::new(b.asset_ids().to_vec(), b.k())
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_rows(&self) -> usize {
        self.asset_ids.len() + self.k + 1
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn level_of(&self, row: usize) -> Level {
        if row == 0 {
            Level::Fleet
        } else if row <= self.k {
            Level::Bundle
        } else {
            Level::Asset
        }
    }

    pub fn rows(&self, level: Level) -> std::ops::Range<usize> {
        match level {
            Level::Fleet => 0..1,
            Level::Bundle => 1..self.k + 1,
            Level::Asset => self.k + 1..self.n_rows(),
        }
    }

    /// Identifier written to the `series_id` column.
    pub fn series_id(&self, row: usize) -> String {
        match self.level_of(row) {
            Level::Fleet => String::new(),
            Level::Bundle => (row - 1).to_string(),
            Level::Asset => self.asset_ids[row - self.k - 1].clone(),
        }
    }

    /// Per-row physical capacity: fleet total, bundle sums, asset capacities.
    pub fn row_capacities(&self, bundling: &Bundling, asset_caps: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_rows());
        out.push(asset_caps.iter().sum());
        out.extend(bundling.bundle_totals(asset_caps));
        out.extend_from_slice(asset_caps);
        out
    }
}

/// Stacked series `(X; z; x)` for every timestamp of the panel, `(N+K+1) x T`.
pub fn hierarchy_series(panel: &AssetPanel, bundling: &Bundling) -> Result<DMatrix<f64>, HierarchyError> {
    if bundling.n_assets() != panel.n_assets() {
        return Err(HierarchyError::ShapeMismatch(format!(
            "bundling has {} assets, panel {}",
            bundling.n_assets(),
            panel.n_assets()
        )));
    }
    let values = panel.values();
    let (n, t, k) = (panel.n_assets(), panel.n_steps(), bundling.k());
    let mut out = DMatrix::zeros(n + k + 1, t);
    for c in 0..t {
        let mut total = 0.0;
        for i in 0..n {
            let v = values[(i, c)];
            total += v;
            out[(1 + bundling.bundle_of(i), c)] += v;
            out[(1 + k + i, c)] = v;
        }
        out[(0, c)] = total;
    }
    Ok(out)
}

/// Forecasts (or aligned actuals) per origin, each `(N+K+1) x T`.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyForecast {
    layout: HierarchyLayout,
    horizon: usize,
    origins: Vec<DateTime<Utc>>,
    values: Vec<DMatrix<f64>>,
}

impl HierarchyForecast {
    pub fn new(
        layout: HierarchyLayout,
        horizon: usize,
        origins: Vec<DateTime<Utc>>,
        values: Vec<DMatrix<f64>>,
    ) -> Result<Self, HierarchyError> {
        if origins.len() != values.len() {
            return Err(HierarchyError::ShapeMismatch(format!(
                "{} origins but {} blocks",
                origins.len(),
                values.len()
            )));
        }
        for (o, m) in values.iter().enumerate() {
            if m.nrows() != layout.n_rows() || m.ncols() != horizon {
                return Err(HierarchyError::ShapeMismatch(format!(
                    "origin {o}: block is {}x{}, expected {}x{horizon}",
                    m.nrows(),
                    m.ncols(),
                    layout.n_rows()
                )));
            }
            if let Some(pos) = m.iter().position(|v| v.is_nan()) {
                return Err(HierarchyError::NotANumber {
                    origin: o,
                    row: pos % m.nrows(),
                    lead: pos / m.nrows() + 1,
                });
            }
        }
        Ok(Self {
            layout,
            horizon,
            origins,
            values,
        })
    }

    pub fn layout(&self) -> &HierarchyLayout {
        &self.layout
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn origins(&self) -> &[DateTime<Utc>] {
        &self.origins
    }

    pub fn n_origins(&self) -> usize {
        self.origins.len()
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.values
    }

    pub fn block(&self, origin: usize) -> &DMatrix<f64> {
        &self.values[origin]
    }

    pub fn same_shape(&self, other: &Self) -> Result<(), HierarchyError> {
        if self.layout != other.layout || self.horizon != other.horizon || self.origins != other.origins {
            return Err(HierarchyError::ShapeMismatch(format!(
                "{} origins x {} rows x {} leads vs {} x {} x {}",
                self.n_origins(),
                self.layout.n_rows(),
                self.horizon,
                other.n_origins(),
                other.layout.n_rows(),
                other.horizon
            )));
        }
        Ok(())
    }

    /// Sub-blocks of one level, each `rows x T`.
    pub fn level_blocks(&self, level: Level) -> Vec<DMatrix<f64>> {
        let r = self.layout.rows(level);
        self.values
            .iter()
            .map(|m| m.rows(r.start, r.len()).into_owned())
            .collect()
    }

    /// Realised values shaped like a forecast: block `o` holds steps `o+1..=o+T`.
    pub fn actuals(
        panel: &AssetPanel,
        bundling: &Bundling,
        origin_idx: &[usize],
        horizon: usize,
    ) -> Result<Self, HierarchyError> {
        let series = hierarchy_series(panel, bundling)?;
        let mut values = Vec::with_capacity(origin_idx.len());
        for &o in origin_idx {
            if o + horizon >= panel.n_steps() {
                return Err(HierarchyError::ShapeMismatch(format!(
                    "origin {o} + {horizon} leads runs past the panel"
                )));
            }
            values.push(series.columns(o + 1, horizon).into_owned());
        }
        let ts = panel.timestamps();
        Self::new(
            HierarchyLayout::from_bundling(bundling),
            horizon,
            origin_idx.iter().map(|&o| ts[o]).collect(),
            values,
        )
    }

    /// Largest absolute incoherence per origin and lead, over bundle and fleet rows.
    pub fn max_incoherence(&self, bundling: &Bundling) -> f64 {
        let k = self.layout.k;
        let n = self.layout.n_assets();
        let mut worst: f64 = 0.0;
        for m in &self.values {
            for lead in 0..self.horizon {
                let mut total = 0.0;
                let mut bundles = vec![0.0; k];
                for i in 0..n {
                    let v = m[(1 + k + i, lead)];
                    total += v;
                    bundles[bundling.bundle_of(i)] += v;
                }
                worst = worst.max((m[(0, lead)] - total).abs());
                for (b, s) in bundles.iter().enumerate() {
                    worst = worst.max((m[(1 + b, lead)] - s).abs());
                }
            }
        }
        worst
    }

    /// Writes `origin,level,series_id,lead,value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), HierarchyError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["origin", "level", "series_id", "lead", "value"])?;
        let ids: Vec<String> = (0..self.layout.n_rows()).map(|r| self.layout.series_id(r)).collect();
        for (origin, m) in self.origins.iter().zip(&self.values) {
            let ts = format_timestamp(origin);
            for (r, id) in ids.iter().enumerate() {
                let level = self.layout.level_of(r).as_str();
                for lead in 0..self.horizon {
                    wtr.write_record([
                        ts.as_str(),
                        level,
                        id.as_str(),
                        &(lead + 1).to_string(),
                        &format_value(m[(r, lead)]),
                    ])?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a file written by [`HierarchyForecast::write_csv`] for a known layout.
    pub fn read_csv<R: Read>(r: R, layout: &HierarchyLayout) -> Result<Self, HierarchyError> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["origin", "level", "series_id", "lead", "value"] {
            return Err(HierarchyError::Malformed("unexpected header".into()));
        }
        let asset_row: HashMap<&str, usize> = layout
            .asset_ids
            .iter()
            .enumerate()
            .map(|(i, a)| (a.as_str(), layout.k + 1 + i))
            .collect();
        let mut origins: Vec<DateTime<Utc>> = Vec::new();
        let mut cells: Vec<Vec<(usize, usize, f64)>> = Vec::new();
        let mut horizon = 0;
        for rec in rdr.records() {
            let rec = rec?;
            let ts = parse_timestamp(&rec[0])?;
            if origins.last() != Some(&ts) {
                if origins.contains(&ts) {
                    return Err(HierarchyError::Malformed(format!("origin {} is not contiguous", &rec[0])));
                }
                origins.push(ts);
                cells.push(Vec::new());
            }
            let level: Level = rec[1].parse().map_err(HierarchyError::Malformed)?;
            let row = match level {
                Level::Fleet => 0,
                Level::Bundle => {
                    let b: usize = rec[2]
                        .parse()
                        .map_err(|_| HierarchyError::Malformed(format!("bad bundle id {:?}", &rec[2])))?;
                    if b >= layout.k {
                        return Err(HierarchyError::Malformed(format!("bundle {b} out of range")));
                    }
                    1 + b
                }
                Level::Asset => *asset_row
                    .get(&rec[2])
                    .ok_or_else(|| HierarchyError::Malformed(format!("unknown asset {:?}", &rec[2])))?,
            };
            let lead: usize = rec[3]
                .parse()
                .map_err(|_| HierarchyError::Malformed(format!("bad lead {:?}", &rec[3])))?;
            if lead == 0 {
                return Err(HierarchyError::Malformed("leads start at 1".into()));
            }
            let value: f64 = rec[4]
                .parse()
                .map_err(|_| HierarchyError::Malformed(format!("bad value {:?}", &rec[4])))?;
            horizon = horizon.max(lead);
            cells.last_mut().unwrap().push((row, lead - 1, value));
        }
        let mut values = Vec::with_capacity(origins.len());
        for (o, block) in cells.iter().enumerate() {
            if block.len() != layout.n_rows() * horizon {
                return Err(HierarchyError::Malformed(format!(
                    "origin {o} has {} cells, expected {}",
                    block.len(),
                    layout.n_rows() * horizon
                )));
            }
            let mut m = DMatrix::from_element(layout.n_rows(), horizon, f64::NAN);
            for &(r, l, v) in block {
                m[(r, l)] = v;
            }
            values.push(m);
        }
        Self::new(layout.clone(), horizon, origins, values)
    }
}

/// Formats with 12 significant digits, then prints the shortest decimal of that rounded value.
pub fn format_value(v: f64) -> String {
    let rounded: f64 = format!("{v:.11e}").parse().unwrap_or(v);
    if rounded == 0.0 {
        "0".to_string()
    } else {
        rounded.to_string()
    }
}
