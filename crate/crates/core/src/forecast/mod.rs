//! Baseline forecasting models and the rolling-origin harness.

mod persistence;
mod ridge;
mod rolling;

use chrono::Duration;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::HierarchyError;

pub use persistence::persistence_forecast;
pub use ridge::{calendar_features, ridge_fit, ridge_predict, RidgeModel, CALENDAR_WIDTH};
pub use rolling::{rolling_forecast, LevelModels, ModelSpec, RollingOutput, Split};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("need at least {needed} training samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("normal equations are singular (lambda = 0 with degenerate features)")]
    SingularSystem,
    #[error("expected history of length {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("no forecast origin in the {0} range has enough history")]
    InsufficientHistory(&'static str),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

/// Historical window `H`, horizon `T` and step duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecastTask {
    pub history_len: usize,
    pub horizon: usize,
    pub granularity_minutes: i64,
}

impl ForecastTask {
    /// Six hours ahead at 15-minute steps.
    pub fn short_term(history_len: usize) -> Self {
        Self {
            history_len,
            horizon: 24,
            granularity_minutes: 15,
        }
    }

    /// 48 hours ahead at hourly steps.
    pub fn day_ahead(history_len: usize) -> Self {
        Self {
            history_len,
            horizon: 48,
            granularity_minutes: 60,
        }
    }

    pub fn granularity(&self) -> Duration {
        Duration::minutes(self.granularity_minutes)
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.history_len < 1 || self.horizon < 1 {
            return Err(ForecastError::InvalidTask("H and T must be at least 1".into()));
        }
        if self.granularity_minutes <= 0 {
            return Err(ForecastError::InvalidTask("granularity must be positive".into()));
        }
        Ok(())
    }
}
