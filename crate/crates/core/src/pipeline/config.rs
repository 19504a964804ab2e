use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Deserialize;

use crate::bundling::Diameter;
use crate::criterion::CriterionKind;
use crate::forecast::{ForecastTask, LevelModels, ModelSpec};
use crate::panel::parse_timestamp;

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ShortTerm,
    DayAhead,
}

impl TaskKind {
    /// Step length the task is defined on.
    pub fn granularity_minutes(self) -> i64 {
        match self {
            TaskKind::ShortTerm => 15,
            TaskKind::DayAhead => 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BundlingMethod {
    Criterion(CriterionKind),
    KMeans,
}

impl std::str::FromStr for BundlingMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "kmeans" {
            Ok(Self::KMeans)
        } else {
            s.parse().map(Self::Criterion)
        }
    }
}

impl std::fmt::Display for BundlingMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Criterion(k) => write!(f, "{k}"),
            Self::KMeans => f.write_str("kmeans"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Persistence,
    Ridge,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum DiameterValue {
    Km(f64),
    Text(String),
}

impl DiameterValue {
    fn resolve(&self) -> Result<Diameter, String> {
        let d = match self {
            Self::Km(v) => Diameter::from(*v),
            Self::Text(s) => s.parse::<Diameter>().map_err(|e| e.to_string())?,
        };
        d.validate().map_err(|e| e.to_string())?;
        Ok(d)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    task: TaskKind,
    history_len: usize,
    horizon: usize,
    granularity_minutes: i64,
    k: usize,
    criterion: String,
    diameter_km: DiameterValue,
    fleet_model: ModelKind,
    bundle_model: ModelKind,
    asset_model: ModelKind,
    ridge_lambda: f64,
    use_calendar_encodings: bool,
    train_start: String,
    train_end: String,
    test_start: String,
    test_end: String,
    seed: u64,
    assets_path: PathBuf,
    series_path: PathBuf,
    output_dir: PathBuf,
    baseline: bool,
    #[serde(default)]
    diameters: Option<Vec<DiameterValue>>,
}

/// Parsed run configuration. Relative paths are resolved against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task_kind: TaskKind,
    pub task: ForecastTask,
    pub k: usize,
    pub method: BundlingMethod,
    pub diameter: Diameter,
    pub models: LevelModels,
    pub train_start: DateTime<Utc>,
    pub train_end: DateTime<Utc>,
    pub test_start: DateTime<Utc>,
    pub test_end: DateTime<Utc>,
    pub seed: u64,
    pub assets_path: PathBuf,
    pub series_path: PathBuf,
    pub output_dir: PathBuf,
    pub baseline: bool,
    pub diameters: Option<Vec<Diameter>>,
}

fn invalid(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), PipelineError> {
        let bytes = fs::read(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes).map_err(|_| invalid("config is not UTF-8"))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok((Self::parse(text, base)?, bytes))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let raw: RawRunConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        if raw.granularity_minutes != raw.task_granularity() {
            return Err(invalid(format!(
                "task {:?} runs on {}-minute steps, granularity_minutes is {}",
                raw.task,
                raw.task_granularity(),
                raw.granularity_minutes
            )));
        }
        let task = ForecastTask {
            history_len: raw.history_len,
            horizon: raw.horizon,
            granularity_minutes: raw.granularity_minutes,
        };
        task.validate().map_err(|e| invalid(e.to_string()))?;
        if raw.k < 1 {
            return Err(invalid("k must be at least 1"));
        }
        if !(raw.ridge_lambda.is_finite() && raw.ridge_lambda >= 0.0) {
            return Err(invalid("ridge_lambda must be finite and >= 0"));
        }
        let spec = |m: ModelKind| match m {
            ModelKind::Persistence => ModelSpec::Persistence,
            ModelKind::Ridge => ModelSpec::Ridge {
                lambda: raw.ridge_lambda,
                calendar: raw.use_calendar_encodings,
            },
        };
        let ts = |s: &str, key: &str| parse_timestamp(s).map_err(|e| invalid(format!("{key}: {e}")));
        let cfg = Self {
            task_kind: raw.task,
            task,
            k: raw.k,
            method: raw.criterion.parse().map_err(|e: String| invalid(e))?,
            diameter: raw.diameter_km.resolve().map_err(invalid)?,
            models: LevelModels {
                fleet: spec(raw.fleet_model),
                bundle: spec(raw.bundle_model),
                asset: spec(raw.asset_model),
            },
            train_start: ts(&raw.train_start, "train_start")?,
            train_end: ts(&raw.train_end, "train_end")?,
            test_start: ts(&raw.test_start, "test_start")?,
            test_end: ts(&raw.test_end, "test_end")?,
            seed: raw.seed,
            assets_path: resolve(base, raw.assets_path),
            series_path: resolve(base, raw.series_path),
            output_dir: resolve(base, raw.output_dir),
            baseline: raw.baseline,
            diameters: raw
                .diameters
                .map(|v| v.iter().map(DiameterValue::resolve).collect::<Result<Vec<_>, _>>())
                .transpose()
                .map_err(invalid)?,
        };
        if cfg.train_start > cfg.train_end || cfg.test_start > cfg.test_end {
            return Err(invalid("each range must start before it ends"));
        }
        if cfg.train_end >= cfg.test_start {
            return Err(invalid("training range must precede the test range"));
        }
        Ok(cfg)
    }
}

impl RawRunConfig {
    fn task_granularity(&self) -> i64 {
        self.task.granularity_minutes()
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_assets: usize,
    pub n_steps: usize,
    pub granularity_minutes: i64,
    pub start: String,
    pub seed: u64,
    pub n_regions: usize,
    pub ar_coefficient: f64,
    pub seasonal_amplitude: f64,
    pub noise_scale: f64,
    pub anticorrelated_pairs: usize,
    pub output_dir: PathBuf,
}

impl SynthConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| invalid(e.to_string()))?;
        cfg.output_dir = resolve(path.parent().unwrap_or(Path::new(".")), cfg.output_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.n_assets < 1 || self.n_steps < 2 {
            return Err(invalid("need n_assets >= 1 and n_steps >= 2"));
        }
        if self.granularity_minutes < crate::panel::MIN_GRANULARITY_MINUTES {
            return Err(invalid("granularity_minutes below the minimum step"));
        }
        if self.n_regions < 1 || self.n_regions > super::synth::MAX_REGIONS {
            return Err(invalid(format!("n_regions must be in 1..={}", super::synth::MAX_REGIONS)));
        }
        if !(0.0..1.0).contains(&self.ar_coefficient) {
            return Err(invalid("ar_coefficient must be in [0, 1)"));
        }
        for (name, v) in [
            ("seasonal_amplitude", self.seasonal_amplitude),
            ("noise_scale", self.noise_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("{name} must be finite and >= 0")));
            }
        }
        if 2 * self.anticorrelated_pairs > self.n_assets {
            return Err(invalid("anticorrelated_pairs needs two assets per pair"));
        }
        parse_timestamp(&self.start).map_err(|e| invalid(format!("start: {e}")))?;
        Ok(())
    }
}
