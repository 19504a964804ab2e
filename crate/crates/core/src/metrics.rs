//! Deterministic point-forecast scores over blocks of `series x leads`.
//!
//! Every function takes one block per forecast origin. Summation runs in a
//! fixed order, so repeated evaluation is bitwise reproducible.

use std::io::Write;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::bundling::Bundling;
use crate::hierarchy::{format_value, HierarchyError, HierarchyForecast, HierarchyLayout, Level};
use crate::panel::AssetPanel;

/// Order used for the variogram score unless configured otherwise.
pub const DEFAULT_VS_ORDER: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("capacity of series {series} must be positive, got {value}")]
    NonpositiveCapacity { series: usize, value: f64 },
    #[error("variogram order must be positive, got {0}")]
    NonpositiveOrder(f64),
    #[error("no forecast origins to score")]
    Empty,
    #[error(
        "variogram score at {0} level costs O(M N^2 T^2); set allow_expensive_vs to compute it"
    )]
    CostGuard(Level),
    #[error("origin {0} has no matching realised values in the panel")]
    UnknownOrigin(String),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn check_shapes(actuals: &[DMatrix<f64>], forecasts: &[DMatrix<f64>]) -> Result<(usize, usize), MetricsError> {
    if actuals.len() != forecasts.len() {
        return Err(MetricsError::ShapeMismatch(format!(
            "{} actual blocks vs {} forecast blocks",
            actuals.len(),
            forecasts.len()
        )));
    }
    let first = actuals.first().ok_or(MetricsError::Empty)?;
    let shape = first.shape();
    for (o, (a, f)) in actuals.iter().zip(forecasts).enumerate() {
        if a.shape() != shape || f.shape() != shape {
            return Err(MetricsError::ShapeMismatch(format!(
                "origin {o}: actual {:?}, forecast {:?}, expected {:?}",
                a.shape(),
                f.shape(),
                shape
            )));
        }
    }
    Ok(shape)
}

/// Mean absolute error normalised per series by its capacity, in percent.
pub fn nmae(actuals: &[DMatrix<f64>], forecasts: &[DMatrix<f64>], capacities: &[f64]) -> Result<f64, MetricsError> {
    let (n, t) = check_shapes(actuals, forecasts)?;
    if capacities.len() != n {
        return Err(MetricsError::ShapeMismatch(format!("{} capacities for {n} series", capacities.len())));
    }
    if let Some(series) = capacities.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(MetricsError::NonpositiveCapacity {
            series,
            value: capacities[series],
        });
    }
    let mut acc = 0.0;
    for (a, f) in actuals.iter().zip(forecasts) {
        for (i, cap) in capacities.iter().enumerate() {
            let l1: f64 = (a.row(i) - f.row(i)).abs().sum();
            acc += l1 / cap;
        }
    }
    Ok(100.0 * acc / (actuals.len() * n * t) as f64)
}

pub fn rmse(actuals: &[DMatrix<f64>], forecasts: &[DMatrix<f64>]) -> Result<f64, MetricsError> {
    let (n, t) = check_shapes(actuals, forecasts)?;
    let sq: f64 = actuals.iter().zip(forecasts).map(|(a, f)| (a - f).norm_squared()).sum();
    Ok((sq / (actuals.len() * n * t) as f64).sqrt())
}

/// Variogram score of order `p` over all pairs of (series, lead) cells.
pub fn variogram_score(actuals: &[DMatrix<f64>], forecasts: &[DMatrix<f64>], p: f64) -> Result<f64, MetricsError> {
    if !(p.is_finite() && p > 0.0) {
        return Err(MetricsError::NonpositiveOrder(p));
    }
    check_shapes(actuals, forecasts)?;
    let mut total = 0.0;
    for (a, f) in actuals.iter().zip(forecasts) {
        // Column-major flattening; the summand is symmetric with a zero diagonal.
        let x = a.as_slice();
        let y = f.as_slice();
        let mut half = 0.0;
        for u in 0..x.len() {
            for v in u + 1..x.len() {
                let d = (x[u] - x[v]).abs().powf(p) - (y[u] - y[v]).abs().powf(p);
                half += d * d;
            }
        }
        total += 2.0 * half;
    }
    Ok(total / actuals.len() as f64)
}

/// `(2/M)` times the summed Frobenius norms of the per-origin error blocks.
pub fn energy_distance(actuals: &[DMatrix<f64>], forecasts: &[DMatrix<f64>]) -> Result<f64, MetricsError> {
    check_shapes(actuals, forecasts)?;
    let s: f64 = actuals.iter().zip(forecasts).map(|(a, f)| (a - f).norm()).sum();
    Ok(2.0 * s / actuals.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub vs_order: f64,
    /// Levels that get a variogram score. Fleet by default.
    pub vs_levels: Vec<Level>,
    pub allow_expensive_vs: bool,
    pub per_series: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            vs_order: DEFAULT_VS_ORDER,
            vs_levels: vec![Level::Fleet],
            allow_expensive_vs: false,
            per_series: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesScore {
    pub series_id: String,
    pub nmae: f64,
    pub rmse: f64,
    pub ed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub level: Level,
    pub nmae: f64,
    pub rmse: f64,
    pub ed: f64,
    pub vs: Option<f64>,
    pub m: usize,
    pub per_series: Vec<SeriesScore>,
}

/// Scores forecasts against realised values taken from the panel at each origin.
pub fn evaluate(
    panel: &AssetPanel,
    forecasts: &HierarchyForecast,
    bundling: &Bundling,
    opts: &EvalOptions,
) -> Result<Vec<EvaluationReport>, MetricsError> {
    let idx = forecasts
        .origins()
        .iter()
        .map(|ts| {
            panel
                .index_of(ts)
                .ok_or_else(|| MetricsError::UnknownOrigin(crate::panel::format_timestamp(ts)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let actuals = HierarchyForecast::actuals(panel, bundling, &idx, forecasts.horizon())?;
    let caps = HierarchyLayout::from_bundling(bundling).row_capacities(bundling, &panel.capacities());
    evaluate_against(&actuals, forecasts, &caps, opts)
}

/// Scores aligned hierarchies; `row_capacities` has one entry per hierarchy row.
pub fn evaluate_against(
    actuals: &HierarchyForecast,
    forecasts: &HierarchyForecast,
    row_capacities: &[f64],
    opts: &EvalOptions,
) -> Result<Vec<EvaluationReport>, MetricsError> {
    actuals.same_shape(forecasts)?;
    let layout = forecasts.layout();
    if row_capacities.len() != layout.n_rows() {
        return Err(MetricsError::ShapeMismatch(format!(
            "{} capacities for {} hierarchy rows",
            row_capacities.len(),
            layout.n_rows()
        )));
    }
    if let Some(level) = opts
        .vs_levels
        .iter()
        .find(|l| **l != Level::Fleet && !opts.allow_expensive_vs)
    {
        return Err(MetricsError::CostGuard(*level));
    }
    let mut out = Vec::with_capacity(3);
    for level in Level::ALL {
        let rows = layout.rows(level);
        let a = actuals.level_blocks(level);
        let f = forecasts.level_blocks(level);
        let caps = &row_capacities[rows.clone()];
        let vs = if opts.vs_levels.contains(&level) {
            Some(variogram_score(&a, &f, opts.vs_order)?)
        } else {
            None
        };
        let mut per_series = Vec::new();
        if opts.per_series {
            for (j, r) in rows.clone().enumerate() {
                let pick = |blocks: &[DMatrix<f64>]| -> Vec<DMatrix<f64>> {
                    blocks.iter().map(|m| m.rows(j, 1).into_owned()).collect()
                };
                let (sa, sf) = (pick(&a), pick(&f));
                per_series.push(SeriesScore {
                    series_id: layout.series_id(r),
                    nmae: nmae(&sa, &sf, &caps[j..j + 1])?,
                    rmse: rmse(&sa, &sf)?,
                    ed: energy_distance(&sa, &sf)?,
                });
            }
        }
        out.push(EvaluationReport {
            level,
            nmae: nmae(&a, &f, caps)?,
            rmse: rmse(&a, &f)?,
            ed: energy_distance(&a, &f)?,
            vs,
            m: a.len(),
            per_series,
        });
    }
    Ok(out)
}

/// Writes `level,metric,value,M`, plus a `series_id` column when any report
/// carries a per-series breakdown.
pub fn write_report<W: Write>(reports: &[EvaluationReport], w: W) -> Result<(), MetricsError> {
    let with_series = reports.iter().any(|r| !r.per_series.is_empty());
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["level", "metric", "value", "M"];
    if with_series {
        header.push("series_id");
    }
    let io = |e: csv::Error| MetricsError::Io(e.into());
    wtr.write_record(&header).map_err(io)?;
    for r in reports {
        let m = r.m.to_string();
        let mut row = |metric: &str, value: f64, series: &str| {
            let mut rec = vec![r.level.as_str().to_string(), metric.to_string(), format_value(value), m.clone()];
            if with_series {
                rec.push(series.to_string());
            }
            wtr.write_record(&rec)
        };
        row("nmae", r.nmae, "").map_err(io)?;
        row("rmse", r.rmse, "").map_err(io)?;
        row("ed", r.ed, "").map_err(io)?;
        if let Some(vs) = r.vs {
            row("vs", vs, "").map_err(io)?;
        }
        for s in &r.per_series {
            row("nmae", s.nmae, &s.series_id).map_err(io)?;
            row("rmse", s.rmse, &s.series_id).map_err(io)?;
            row("ed", s.ed, &s.series_id).map_err(io)?;
        }
    }
    wtr.flush()?;
    Ok(())
}
