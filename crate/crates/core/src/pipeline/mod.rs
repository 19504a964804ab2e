//! Configuration, synthetic data and end-to-end orchestration.

mod config;
mod manifest;
mod run;
mod sweep;
pub mod synth;

use std::fmt;

use thiserror::Error;

use crate::panel::PanelError;

pub use config::{BundlingMethod, ModelKind, RunConfig, SynthConfig, TaskKind};
pub use manifest::{sha256_hex, Manifest};
pub use run::{
    bundle_stage, evaluate_stage, forecast_stage, load_panel, reconcile_stage, run, run_bundle, run_evaluate,
    run_forecast, run_reconcile, split_for, BundleStage, Reconciled, ResidualMoments, RunSummary, BASELINE_DIR,
    BUNDLING_FILE, COMPARISON_FILE, DIAGNOSTICS_FILE, FORECASTS_FILE, MANIFEST_FILE, MOMENTS_FILE, RAW_REPORT_FILE,
    RECONCILED_FILE, REPORT_FILE,
};
pub use sweep::{run_sweep, write_sweep, SWEEP_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Bundle,
    Forecast,
    Reconcile,
    Evaluate,
    Sweep,
    Synth,
    Output,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Bundle => "bundle",
            Stage::Forecast => "forecast",
            Stage::Reconcile => "reconcile",
            Stage::Evaluate => "evaluate",
            Stage::Sweep => "sweep",
            Stage::Synth => "synth",
            Stage::Output => "output",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("[config] {0}")]
    Config(String),
    #[error("[{stage}] {message}")]
    Stage { stage: Stage, message: String },
    #[error("[ingest] {0}")]
    Panel(#[from] PanelError),
    #[error("[output] {0}")]
    Io(#[from] std::io::Error),
    #[error("[output] {0}")]
    Csv(#[from] csv::Error),
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            Self::Config(_) => Stage::Config,
            Self::Stage { stage, .. } => *stage,
            Self::Panel(_) => Stage::Ingest,
            Self::Io(_) | Self::Csv(_) => Stage::Output,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: fmt::Display> StageExt<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::Stage {
            stage,
            message: e.to_string(),
        })
    }
}
