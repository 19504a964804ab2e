use std::ops::Range;

use chrono::{DateTime, Utc};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bundling::Bundling;
use crate::hierarchy::{hierarchy_series, HierarchyError, HierarchyForecast, HierarchyLayout, Level};
use crate::panel::AssetPanel;

use super::{persistence_forecast, ridge_fit, ridge_predict, ForecastError, ForecastTask, RidgeModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    Persistence,
    Ridge { lambda: f64, calendar: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelModels {
    pub fleet: ModelSpec,
    pub bundle: ModelSpec,
    pub asset: ModelSpec,
}

impl LevelModels {
    pub fn uniform(spec: ModelSpec) -> Self {
        Self {
            fleet: spec,
            bundle: spec,
            asset: spec,
        }
    }

    pub fn get(&self, level: Level) -> ModelSpec {
        match level {
            Level::Fleet => self.fleet,
            Level::Bundle => self.bundle,
            Level::Asset => self.asset,
        }
    }
}

/// Training and test step ranges on the panel grid, half-open.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Range<usize>,
    pub test: Range<usize>,
}

impl Split {
    /// Resolves inclusive timestamp bounds against the panel.
    pub fn from_timestamps(
        panel: &AssetPanel,
        train_start: &DateTime<Utc>,
        train_end: &DateTime<Utc>,
        test_start: &DateTime<Utc>,
        test_end: &DateTime<Utc>,
    ) -> Result<Self, ForecastError> {
        let find = |ts: &DateTime<Utc>, name: &str| {
            panel
                .index_of(ts)
                .ok_or_else(|| ForecastError::InvalidSplit(format!("{name} {ts} is not on the panel grid")))
        };
        let split = Self {
            train: find(train_start, "train_start")?..find(train_end, "train_end")? + 1,
            test: find(test_start, "test_start")?..find(test_end, "test_end")? + 1,
        };
        split.validate(panel.n_steps())?;
        Ok(split)
    }

    pub fn validate(&self, n_steps: usize) -> Result<(), ForecastError> {
        if self.train.is_empty() || self.test.is_empty() {
            return Err(ForecastError::InvalidSplit("empty range".into()));
        }
        if self.train.end > self.test.start {
            return Err(ForecastError::InvalidSplit("training range must precede the test range".into()));
        }
        if self.test.end > n_steps {
            return Err(ForecastError::InvalidSplit("test range runs past the panel".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingOutput {
    pub test: HierarchyForecast,
    pub test_origins: Vec<usize>,
    /// Forecasts over the training range, for residual estimation.
    pub in_sample: HierarchyForecast,
    pub in_sample_origins: Vec<usize>,
    /// Origins dropped for lack of `H` trailing samples.
    pub skipped_test: Vec<DateTime<Utc>>,
    pub skipped_in_sample: Vec<DateTime<Utc>>,
}

enum Fitted {
    Persistence,
    Ridge(RidgeModel),
}

/// Forecasts every level from every origin whose `T` targets fall inside
/// the range. One model per series, fitted on the training range.
pub fn rolling_forecast(
    panel: &AssetPanel,
    bundling: &Bundling,
    task: &ForecastTask,
    models: &LevelModels,
    split: &Split,
) -> Result<RollingOutput, ForecastError> {
    task.validate()?;
    split.validate(panel.n_steps())?;
    if panel.granularity().num_minutes() != task.granularity_minutes {
        return Err(ForecastError::InvalidTask(format!(
            "panel step is {} min, task expects {} min",
            panel.granularity().num_minutes(),
            task.granularity_minutes
        )));
    }
    let layout = HierarchyLayout::from_bundling(bundling);
    let series = hierarchy_series(panel, bundling)?;
    let caps = layout.row_capacities(bundling, &panel.capacities());
    let ts = panel.timestamps();

    let train_ts = &ts[split.train.clone()];
    let mut fitted = Vec::with_capacity(layout.n_rows());
    for r in 0..layout.n_rows() {
        let model = match models.get(layout.level_of(r)) {
            ModelSpec::Persistence => Fitted::Persistence,
            ModelSpec::Ridge { lambda, calendar } => {
                let row: Vec<f64> = series.row(r).columns_range(split.train.clone()).iter().copied().collect();
                Fitted::Ridge(ridge_fit(&row, train_ts, task, lambda, calendar)?.with_clip(caps[r]))
            }
        };
        fitted.push(model);
    }

    let run = |range: &Range<usize>| -> Result<(Vec<usize>, Vec<DateTime<Utc>>, Vec<DMatrix<f64>>), ForecastError> {
        let mut origins = Vec::new();
        let mut skipped = Vec::new();
        let mut blocks = Vec::new();
        if range.end < task.horizon + 1 {
            return Ok((origins, skipped, blocks));
        }
        let last = range.end - 1 - task.horizon;
        for o in range.start..=last {
            if o + 1 < task.history_len {
                skipped.push(ts[o]);
                continue;
            }
            let lo = o + 1 - task.history_len;
            let mut block = DMatrix::zeros(layout.n_rows(), task.horizon);
            let mut history = Vec::with_capacity(task.history_len);
            for (r, model) in fitted.iter().enumerate() {
                history.clear();
                history.extend(series.row(r).columns_range(lo..o + 1).iter());
                let pred = match model {
                    Fitted::Persistence => persistence_forecast(&history, task.horizon)?,
                    Fitted::Ridge(m) => ridge_predict(m, &history, &ts[o])?,
                };
                for (lead, v) in pred.into_iter().enumerate() {
                    block[(r, lead)] = v;
                }
            }
            origins.push(o);
            blocks.push(block);
        }
        Ok((origins, skipped, blocks))
    };

    let (test_origins, skipped_test, test_blocks) = run(&split.test)?;
    if test_origins.is_empty() {
        return Err(ForecastError::InsufficientHistory("test"));
    }
    let (in_sample_origins, skipped_in_sample, in_blocks) = run(&split.train)?;
    if in_sample_origins.is_empty() {
        return Err(ForecastError::InsufficientHistory("training"));
    }
    let to_forecast = |origins: &[usize], blocks: Vec<DMatrix<f64>>| -> Result<HierarchyForecast, HierarchyError> {
        HierarchyForecast::new(
            layout.clone(),
            task.horizon,
            origins.iter().map(|&o| ts[o]).collect(),
            blocks,
        )
    };
    Ok(RollingOutput {
        test: to_forecast(&test_origins, test_blocks)?,
        in_sample: to_forecast(&in_sample_origins, in_blocks)?,
        test_origins,
        in_sample_origins,
        skipped_test,
        skipped_in_sample,
    })
}
