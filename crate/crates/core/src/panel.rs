//! Asset metadata and the historical output panel.
//!
//! A panel is an `N x T` matrix of megawatt readings on a uniform UTC grid.
//! Rows follow the column order of the series file.

use std::collections::HashSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime, TimeZone, Utc};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Timestamp layout used by every CSV this crate reads or writes.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// Smallest supported step between consecutive samples.
pub const MIN_GRANULARITY_MINUTES: i64 = 15;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("asset {0} is listed in metadata but has no column in the series file")]
    MissingColumn(String),
    #[error("series column {0} has no metadata entry")]
    UnknownAsset(String),
    #[error("duplicate asset id {0}")]
    DuplicateAssetId(String),
    #[error("timestamp gap or irregular spacing at row {row} ({timestamp})")]
    GapInTimestamps { row: usize, timestamp: String },
    #[error("granularity of {minutes} minutes is not supported")]
    UnsupportedGranularity { minutes: i64 },
    #[error("value {value} for asset {asset_id} at row {row} is outside [0, {capacity}]")]
    ValueOutOfRange {
        asset_id: String,
        row: usize,
        value: f64,
        capacity: f64,
    },
    #[error("missing value for asset {asset_id} at row {row}")]
    MissingValue { asset_id: String, row: usize },
    #[error("invalid metadata for asset {asset_id}: {reason}")]
    InvalidMeta { asset_id: String, reason: String },
    #[error("bad timestamp {0:?}")]
    BadTimestamp(String),
    #[error("bad number {value:?} at row {row}")]
    BadNumber { value: String, row: usize },
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("panel must contain at least one asset and two timestamps")]
    Empty,
    #[error("panel shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetMeta {
    pub asset_id: String,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub capacity_mw: f64,
}

impl AssetMeta {
    pub fn validate(&self) -> Result<(), PanelError> {
        let bad = |reason: &str| PanelError::InvalidMeta {
            asset_id: self.asset_id.clone(),
            reason: reason.to_string(),
        };
        if self.asset_id.is_empty() {
            return Err(bad("empty asset id"));
        }
        if !(self.latitude_deg.is_finite() && (-90.0..=90.0).contains(&self.latitude_deg)) {
            return Err(bad("latitude outside [-90, 90]"));
        }
        if !(self.longitude_deg.is_finite() && (-180.0..=180.0).contains(&self.longitude_deg)) {
            return Err(bad("longitude outside [-180, 180]"));
        }
        if !(self.capacity_mw.is_finite() && self.capacity_mw > 0.0) {
            return Err(bad("capacity must be strictly positive"));
        }
        Ok(())
    }
}

/// Validated history of asset outputs. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetPanel {
    assets: Vec<AssetMeta>,
    timestamps: Vec<DateTime<Utc>>,
    values: DMatrix<f64>,
}

impl AssetPanel {
    /// Builds a panel, enforcing every ingest invariant.
    pub fn new(
        assets: Vec<AssetMeta>,
        timestamps: Vec<DateTime<Utc>>,
        values: DMatrix<f64>,
    ) -> Result<Self, PanelError> {
        if assets.is_empty() || timestamps.len() < 2 {
            return Err(PanelError::Empty);
        }
        if values.nrows() != assets.len() || values.ncols() != timestamps.len() {
            return Err(PanelError::Shape(format!(
                "values are {}x{}, expected {}x{}",
                values.nrows(),
                values.ncols(),
                assets.len(),
                timestamps.len()
            )));
        }
        let mut seen = HashSet::new();
        for a in &assets {
            a.validate()?;
            if !seen.insert(a.asset_id.as_str()) {
                return Err(PanelError::DuplicateAssetId(a.asset_id.clone()));
            }
        }
        let step = timestamps[1] - timestamps[0];
        if step <= Duration::zero() {
            return Err(PanelError::GapInTimestamps {
                row: 1,
                timestamp: format_timestamp(&timestamps[1]),
            });
        }
        if step < Duration::minutes(MIN_GRANULARITY_MINUTES) {
            return Err(PanelError::UnsupportedGranularity {
                minutes: step.num_minutes(),
            });
        }
        for (row, pair) in timestamps.windows(2).enumerate() {
            if pair[1] - pair[0] != step {
                return Err(PanelError::GapInTimestamps {
                    row: row + 1,
                    timestamp: format_timestamp(&pair[1]),
                });
            }
        }
        for (i, a) in assets.iter().enumerate() {
            for t in 0..timestamps.len() {
                let v = values[(i, t)];
                if v.is_nan() {
                    return Err(PanelError::MissingValue {
                        asset_id: a.asset_id.clone(),
                        row: t,
                    });
                }
                if !(0.0..=a.capacity_mw).contains(&v) {
                    return Err(PanelError::ValueOutOfRange {
                        asset_id: a.asset_id.clone(),
                        row: t,
                        value: v,
                        capacity: a.capacity_mw,
                    });
                }
            }
        }
        Ok(Self {
            assets,
            timestamps,
            values,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_steps(&self) -> usize {
        self.timestamps.len()
    }

    pub fn assets(&self) -> &[AssetMeta] {
        &self.assets
    }

    pub fn asset_ids(&self) -> Vec<String> {
        self.assets.iter().map(|a| a.asset_id.clone()).collect()
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.assets.iter().map(|a| a.capacity_mw).collect()
    }

    pub fn fleet_capacity(&self) -> f64 {
        self.assets.iter().map(|a| a.capacity_mw).sum()
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }

    pub fn granularity(&self) -> Duration {
        self.timestamps[1] - self.timestamps[0]
    }

    /// `N x T` values, rows in asset order.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn series(&self, asset: usize) -> Vec<f64> {
        self.values.row(asset).iter().copied().collect()
    }

    /// Index of `ts` on the panel grid, if present.
    pub fn index_of(&self, ts: &DateTime<Utc>) -> Option<usize> {
        self.timestamps.binary_search(ts).ok()
    }

    /// Restricts to the columns `start..end`.
    pub fn slice_steps(&self, start: usize, end: usize) -> Result<Self, PanelError> {
        if start >= end || end > self.n_steps() {
            return Err(PanelError::Shape(format!(
                "step range {start}..{end} out of 0..{}",
                self.n_steps()
            )));
        }
        Self::new(
            self.assets.clone(),
            self.timestamps[start..end].to_vec(),
            self.values.columns(start, end - start).into_owned(),
        )
    }

    /// Keeps only the listed assets, in the given order.
    pub fn select_assets(&self, idx: &[usize]) -> Result<Self, PanelError> {
        let assets: Vec<AssetMeta> = idx.iter().map(|&i| self.assets[i].clone()).collect();
        let values = DMatrix::from_fn(idx.len(), self.n_steps(), |r, c| self.values[(idx[r], c)]);
        Self::new(assets, self.timestamps.clone(), values)
    }
}

pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, PanelError> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.with_timezone(&Utc));
    }
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .map(|n| Utc.from_utc_datetime(&n))
        .map_err(|_| PanelError::BadTimestamp(s.to_string()))
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

fn open(path: &Path) -> Result<File, PanelError> {
    File::open(path).map_err(|source| PanelError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_f64(s: &str, row: usize) -> Result<f64, PanelError> {
    s.trim().parse::<f64>().map_err(|_| PanelError::BadNumber {
        value: s.to_string(),
        row,
    })
}

/// Reads `asset_id,latitude_deg,longitude_deg,capacity_mw`.
pub fn read_assets<R: Read>(reader: R) -> Result<Vec<AssetMeta>, PanelError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["asset_id", "latitude_deg", "longitude_deg", "capacity_mw"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(PanelError::BadHeader(headers.iter().collect::<Vec<_>>().join(",")));
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let meta = AssetMeta {
            asset_id: rec[0].to_string(),
            latitude_deg: parse_f64(&rec[1], row)?,
            longitude_deg: parse_f64(&rec[2], row)?,
            capacity_mw: parse_f64(&rec[3], row)?,
        };
        meta.validate()?;
        if !seen.insert(meta.asset_id.clone()) {
            return Err(PanelError::DuplicateAssetId(meta.asset_id));
        }
        out.push(meta);
    }
    Ok(out)
}

/// Reads the wide series file and joins it against `assets`.
///
/// Column order of the series file defines the asset order of the panel.
pub fn read_panel<R: Read>(assets: &[AssetMeta], series: R) -> Result<AssetPanel, PanelError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(series);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("timestamp") {
        return Err(PanelError::BadHeader("first column must be `timestamp`".into()));
    }
    let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut seen = HashSet::new();
    for c in &columns {
        if !seen.insert(c.as_str()) {
            return Err(PanelError::DuplicateAssetId(c.clone()));
        }
    }
    for a in assets {
        if !seen.contains(a.asset_id.as_str()) {
            return Err(PanelError::MissingColumn(a.asset_id.clone()));
        }
    }
    let ordered: Vec<AssetMeta> = columns
        .iter()
        .map(|c| {
            assets
                .iter()
                .find(|a| &a.asset_id == c)
                .cloned()
                .ok_or_else(|| PanelError::UnknownAsset(c.clone()))
        })
        .collect::<Result<_, _>>()?;

    let mut timestamps = Vec::new();
    let mut flat: Vec<f64> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        timestamps.push(parse_timestamp(&rec[0])?);
        for (j, cell) in rec.iter().skip(1).enumerate() {
            if cell.trim().is_empty() {
                return Err(PanelError::MissingValue {
                    asset_id: columns[j].clone(),
                    row,
                });
            }
            flat.push(parse_f64(cell, row)?);
        }
        if rec.len() != columns.len() + 1 {
            return Err(PanelError::Shape(format!("row {row} has {} fields", rec.len())));
        }
    }
    let n = ordered.len();
    let t = timestamps.len();
    // `flat` is row-major over time, i.e. column-major for an N x T matrix.
    let values = DMatrix::from_vec(n, t, flat);
    AssetPanel::new(ordered, timestamps, values)
}

/// Loads and validates an asset panel from the two CSV files.
pub fn ingest_panel(assets_file: &Path, series_file: &Path) -> Result<AssetPanel, PanelError> {
    let assets = read_assets(open(assets_file)?)?;
    read_panel(&assets, open(series_file)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assets_csv() -> &'static str {
        "asset_id,latitude_deg,longitude_deg,capacity_mw\n\
         a,40.0,-90.0,10.0\n\
         b,41.0,-91.0,20.0\n\
         c,42.0,-92.0,30.0\n"
    }

    fn series_csv(rows: usize) -> String {
        let mut s = String::from("timestamp,a,b,c\n");
        let start = parse_timestamp("2019-01-08T00:00:00Z").unwrap();
        for r in 0..rows {
            let ts = start + Duration::minutes(15 * r as i64);
            s.push_str(&format!("{},{},{},{}\n", format_timestamp(&ts), 1.0, 2.0, 3.0));
        }
        s
    }

    #[test]
    fn parses_three_assets_96_rows() {
        let assets = read_assets(assets_csv().as_bytes()).unwrap();
        let panel = read_panel(&assets, series_csv(96).as_bytes()).unwrap();
        assert_eq!(panel.n_assets(), 3);
        assert_eq!(panel.n_steps(), 96);
        assert_eq!(panel.granularity(), Duration::minutes(15));
        assert_eq!(panel.fleet_capacity(), 60.0);
    }

    #[test]
    fn series_column_order_defines_asset_order() {
        let assets = read_assets(assets_csv().as_bytes()).unwrap();
        let csv = "timestamp,c,a,b\n2019-01-08T00:00:00Z,3,1,2\n2019-01-08T00:15:00Z,3,1,2\n";
        let panel = read_panel(&assets, csv.as_bytes()).unwrap();
        assert_eq!(panel.asset_ids(), vec!["c", "a", "b"]);
        assert_eq!(panel.values()[(0, 0)], 3.0);
        assert_eq!(panel.capacities(), vec![30.0, 10.0, 20.0]);
    }

    #[test]
    fn skipped_timestamp_is_a_gap() {
        let assets = read_assets(assets_csv().as_bytes()).unwrap();
        let mut lines: Vec<String> = series_csv(6).lines().map(str::to_string).collect();
        lines.remove(3);
        let err = read_panel(&assets, lines.join("\n").as_bytes()).unwrap_err();
        assert!(matches!(err, PanelError::GapInTimestamps { row: 2, .. }), "{err}");
    }

    #[test]
    fn value_above_capacity_is_rejected() {
        let assets = read_assets(assets_csv().as_bytes()).unwrap();
        let csv = "timestamp,a,b,c\n2019-01-08T00:00:00Z,12.0,1,1\n2019-01-08T00:15:00Z,1,1,1\n";
        let err = read_panel(&assets, csv.as_bytes()).unwrap_err();
        assert!(matches!(err, PanelError::ValueOutOfRange { value, .. } if value == 12.0));
    }

    #[test]
    fn negative_value_is_rejected() {
        let assets = read_assets(assets_csv().as_bytes()).unwrap();
        let csv = "timestamp,a,b,c\n2019-01-08T00:00:00Z,-0.5,1,1\n2019-01-08T00:15:00Z,1,1,1\n";
        assert!(matches!(
            read_panel(&assets, csv.as_bytes()),
            Err(PanelError::ValueOutOfRange { .. })
        ));
    }

    #[test]
    fn missing_column_and_duplicates() {
        let assets = read_assets(assets_csv().as_bytes()).unwrap();
        let csv = "timestamp,a,b\n2019-01-08T00:00:00Z,1,1\n2019-01-08T00:15:00Z,1,1\n";
        assert!(matches!(
            read_panel(&assets, csv.as_bytes()),
            Err(PanelError::MissingColumn(id)) if id == "c"
        ));
        let dup = "asset_id,latitude_deg,longitude_deg,capacity_mw\na,0,0,1\na,1,1,1\n";
        assert!(matches!(
            read_assets(dup.as_bytes()),
            Err(PanelError::DuplicateAssetId(_))
        ));
    }

    #[test]
    fn empty_cell_is_missing_value() {
        let assets = read_assets(assets_csv().as_bytes()).unwrap();
        let csv = "timestamp,a,b,c\n2019-01-08T00:00:00Z,1,,1\n2019-01-08T00:15:00Z,1,1,1\n";
        assert!(matches!(
            read_panel(&assets, csv.as_bytes()),
            Err(PanelError::MissingValue { .. })
        ));
    }

    #[test]
    fn rejects_nonpositive_capacity() {
        let csv = "asset_id,latitude_deg,longitude_deg,capacity_mw\na,0,0,0\n";
        assert!(matches!(
            read_assets(csv.as_bytes()),
            Err(PanelError::InvalidMeta { .. })
        ));
    }

    #[test]
    fn sub_quarter_hour_steps_are_unsupported() {
        let assets = read_assets(assets_csv().as_bytes()).unwrap();
        let csv = "timestamp,a,b,c\n2019-01-08T00:00:00Z,1,1,1\n2019-01-08T00:05:00Z,1,1,1\n";
        assert!(matches!(
            read_panel(&assets, csv.as_bytes()),
            Err(PanelError::UnsupportedGranularity { minutes: 5 })
        ));
    }
}
