use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::bundling::{greedy_bundle, kmeans_bundle, Bundling, BundlingConfig};
use crate::criterion::CriterionKind;
use crate::forecast::{rolling_forecast, RollingOutput, Split};
use crate::geo::haversine_matrix;
use crate::hierarchy::{HierarchyForecast, HierarchyLayout, Level};
use crate::metrics::{evaluate, write_report, EvalOptions, EvaluationReport};
use crate::panel::{ingest_panel, AssetPanel};
use crate::reconcile::{
    bound_violations, build_reconciler, estimate_weights, floor_weights, reconcile, summing_matrix, weight_floor,
    LeadWeights, ReconcilerModel,
};

use super::manifest::{InputHash, Manifest};
use super::{BundlingMethod, PipelineError, RunConfig, Stage, StageExt};

pub const BUNDLING_FILE: &str = "bundling.csv";
pub const FORECASTS_FILE: &str = "forecasts.csv";
pub const MOMENTS_FILE: &str = "insample_moments.csv";
pub const RECONCILED_FILE: &str = "reconciled.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const RAW_REPORT_FILE: &str = "report_raw.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BASELINE_DIR: &str = "baseline";

/// Files written by one command. Everything is removed again unless
/// [`Outputs::commit`] is reached.
struct Outputs {
    root: PathBuf,
    created_dirs: Vec<PathBuf>,
    files: Vec<PathBuf>,
    names: Vec<String>,
    committed: bool,
}

impl Outputs {
    fn new(root: &Path) -> Result<Self, PipelineError> {
        let mut missing = Vec::new();
        let mut p = root.to_path_buf();
        while !p.as_os_str().is_empty() && !p.exists() {
            missing.push(p.clone());
            if !p.pop() {
                break;
            }
        }
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            created_dirs: missing,
            files: Vec::new(),
            names: Vec::new(),
            committed: false,
        })
    }

    fn write<F>(&mut self, rel: &str, f: F) -> Result<(), PipelineError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), PipelineError>,
    {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            if !parent.exists() {
                fs::create_dir_all(parent)?;
                self.created_dirs.insert(0, parent.to_path_buf());
            }
        }
        let file = File::create(&path)?;
        self.files.push(path);
        self.names.push(rel.to_string());
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }

    fn commit(mut self) -> Vec<String> {
        self.committed = true;
        std::mem::take(&mut self.names)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in self.files.iter().rev() {
            let _ = fs::remove_file(f);
        }
        // Deepest first; `remove_dir` refuses non-empty directories.
        for d in &self.created_dirs {
            let _ = fs::remove_dir(d);
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, PipelineError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| PipelineError::Config(format!("cannot open {}: {e}", path.display())))
}

pub fn load_panel(cfg: &RunConfig) -> Result<AssetPanel, PipelineError> {
    Ok(ingest_panel(&cfg.assets_path, &cfg.series_path)?)
}

pub fn split_for(cfg: &RunConfig, panel: &AssetPanel) -> Result<Split, PipelineError> {
    Split::from_timestamps(panel, &cfg.train_start, &cfg.train_end, &cfg.test_start, &cfg.test_end).at(Stage::Config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleStage {
    pub bundling: Bundling,
    /// Criterion objective on the training window; `None` for k-means.
    pub objective: Option<f64>,
    pub diameter_violations: usize,
}

/// Learns the bundling from the training window only.
pub fn bundle_stage(cfg: &RunConfig, panel: &AssetPanel, split: &Split) -> Result<BundleStage, PipelineError> {
    let d = haversine_matrix(panel.assets()).at(Stage::Bundle)?;
    match cfg.method {
        BundlingMethod::KMeans => {
            let bcfg = BundlingConfig {
                k: cfg.k,
                criterion: CriterionKind::Variance,
                diameter: cfg.diameter,
                seed: cfg.seed,
            };
            let out = kmeans_bundle(panel.assets(), &d, &bcfg).at(Stage::Bundle)?;
            Ok(BundleStage {
                bundling: out.bundling,
                objective: None,
                diameter_violations: out.feasibility.violations.len(),
            })
        }
        BundlingMethod::Criterion(kind) => {
            let train = panel.slice_steps(split.train.start, split.train.end).at(Stage::Bundle)?;
            let bcfg = BundlingConfig {
                k: cfg.k,
                criterion: kind,
                diameter: cfg.diameter,
                seed: cfg.seed,
            };
            let out = greedy_bundle(&train, &d, &bcfg).at(Stage::Bundle)?;
            Ok(BundleStage {
                bundling: out.bundling,
                objective: Some(out.objective),
                diameter_violations: 0,
            })
        }
    }
}

pub fn forecast_stage(
    cfg: &RunConfig,
    panel: &AssetPanel,
    bundling: &Bundling,
    split: &Split,
) -> Result<RollingOutput, PipelineError> {
    rolling_forecast(panel, bundling, &cfg.task, &cfg.models, split).at(Stage::Forecast)
}

/// Per-lead mean squared in-sample residuals, before flooring.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMoments {
    pub layout: HierarchyLayout,
    /// `mean_sq[lead][row]`
    pub mean_sq: Vec<Vec<f64>>,
    pub sample_count: usize,
}

impl ResidualMoments {
    pub fn from_rolling(panel: &AssetPanel, bundling: &Bundling, rolling: &RollingOutput) -> Result<Self, PipelineError> {
        let actuals = HierarchyForecast::actuals(
            panel,
            bundling,
            &rolling.in_sample_origins,
            rolling.in_sample.horizon(),
        )
        .at(Stage::Reconcile)?;
        let raw = estimate_weights(&rolling.in_sample, &actuals, 0.0).at(Stage::Reconcile)?;
        Ok(Self {
            layout: rolling.in_sample.layout().clone(),
            mean_sq: raw.w,
            sample_count: raw.sample_count,
        })
    }

    pub fn weights(&self, floor: f64) -> LeadWeights {
        floor_weights(self.mean_sq.clone(), self.sample_count, floor)
    }

    /// Writes `lead,level,series_id,mean_sq,M` at full precision.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), PipelineError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["lead", "level", "series_id", "mean_sq", "M"])?;
        let m = self.sample_count.to_string();
        for (lead, row) in self.mean_sq.iter().enumerate() {
            for (r, v) in row.iter().enumerate() {
                wtr.write_record([
                    (lead + 1).to_string(),
                    self.layout.level_of(r).as_str().to_string(),
                    self.layout.series_id(r),
                    v.to_string(),
                    m.clone(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, layout: &HierarchyLayout) -> Result<Self, PipelineError> {
        let bad = |msg: String| PipelineError::Stage {
            stage: Stage::Reconcile,
            message: format!("malformed residual moments: {msg}"),
        };
        let mut rdr = csv::Reader::from_reader(r);
        if rdr.headers()?.iter().collect::<Vec<_>>() != ["lead", "level", "series_id", "mean_sq", "M"] {
            return Err(bad("unexpected header".into()));
        }
        let rows = layout.n_rows();
        let mut mean_sq: Vec<Vec<f64>> = Vec::new();
        let mut sample_count = None;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let (lead, r) = (i / rows, i % rows);
            let expect_lead = (lead + 1).to_string();
            if rec[0] != *expect_lead || rec[1] != *layout.level_of(r).as_str() || rec[2] != *layout.series_id(r) {
                return Err(bad(format!("row {} out of order", i + 1)));
            }
            let v: f64 = rec[3].parse().map_err(|_| bad(format!("bad value {:?}", &rec[3])))?;
            let m: usize = rec[4].parse().map_err(|_| bad(format!("bad count {:?}", &rec[4])))?;
            if *sample_count.get_or_insert(m) != m {
                return Err(bad("inconsistent M".into()));
            }
            if r == 0 {
                mean_sq.push(Vec::with_capacity(rows));
            }
            mean_sq[lead].push(v);
        }
        if mean_sq.is_empty() || mean_sq.last().map(Vec::len) != Some(rows) {
            return Err(bad("incomplete file".into()));
        }
        Ok(Self {
            layout: layout.clone(),
            mean_sq,
            sample_count: sample_count.unwrap_or(0),
        })
    }
}

pub struct Reconciled {
    pub model: ReconcilerModel,
    pub forecasts: HierarchyForecast,
    pub bound_violations: Vec<usize>,
}

pub fn reconcile_stage(
    panel: &AssetPanel,
    bundling: &Bundling,
    raw: &HierarchyForecast,
    moments: &ResidualMoments,
) -> Result<Reconciled, PipelineError> {
    let weights = moments.weights(weight_floor(panel.fleet_capacity()));
    let model = build_reconciler(&summing_matrix(bundling), &weights).at(Stage::Reconcile)?;
    let forecasts = reconcile(&model, raw).at(Stage::Reconcile)?;
    let caps = forecasts.layout().row_capacities(bundling, &panel.capacities());
    let bound_violations = bound_violations(&forecasts, &caps);
    Ok(Reconciled {
        model,
        forecasts,
        bound_violations,
    })
}

/// Reports for the raw and the reconciled forecasts, in that order.
pub fn evaluate_stage(
    panel: &AssetPanel,
    bundling: &Bundling,
    raw: &HierarchyForecast,
    reconciled: &HierarchyForecast,
) -> Result<(Vec<EvaluationReport>, Vec<EvaluationReport>), PipelineError> {
    let opts = EvalOptions::default();
    let a = evaluate(panel, raw, bundling, &opts).at(Stage::Evaluate)?;
    let b = evaluate(panel, reconciled, bundling, &opts).at(Stage::Evaluate)?;
    Ok((a, b))
}

struct Hierarchy {
    rolling: RollingOutput,
    moments: ResidualMoments,
    reconciled: Reconciled,
    raw_reports: Vec<EvaluationReport>,
    reports: Vec<EvaluationReport>,
}

fn predict_reconcile_evaluate(
    cfg: &RunConfig,
    panel: &AssetPanel,
    bundling: &Bundling,
    split: &Split,
) -> Result<Hierarchy, PipelineError> {
    let rolling = forecast_stage(cfg, panel, bundling, split)?;
    let moments = ResidualMoments::from_rolling(panel, bundling, &rolling)?;
    let reconciled = reconcile_stage(panel, bundling, &rolling.test, &moments)?;
    let (raw_reports, reports) = evaluate_stage(panel, bundling, &rolling.test, &reconciled.forecasts)?;
    Ok(Hierarchy {
        rolling,
        moments,
        reconciled,
        raw_reports,
        reports,
    })
}

fn write_hierarchy(out: &mut Outputs, prefix: &str, bundling: &Bundling, h: &Hierarchy) -> Result<(), PipelineError> {
    out.write(&format!("{prefix}{BUNDLING_FILE}"), |w| bundling.write_csv(w).at(Stage::Output))?;
    out.write(&format!("{prefix}{FORECASTS_FILE}"), |w| h.rolling.test.write_csv(w).at(Stage::Output))?;
    out.write(&format!("{prefix}{MOMENTS_FILE}"), |w| h.moments.write_csv(w))?;
    out.write(&format!("{prefix}{RECONCILED_FILE}"), |w| {
        h.reconciled.forecasts.write_csv(w).at(Stage::Output)
    })?;
    out.write(&format!("{prefix}{DIAGNOSTICS_FILE}"), |w| {
        h.reconciled
            .model
            .write_diagnostics(&h.reconciled.bound_violations, w)
            .at(Stage::Output)
    })?;
    out.write(&format!("{prefix}{RAW_REPORT_FILE}"), |w| write_report(&h.raw_reports, w).at(Stage::Output))?;
    out.write(&format!("{prefix}{REPORT_FILE}"), |w| write_report(&h.reports, w).at(Stage::Output))?;
    Ok(())
}

fn write_comparison<W: Write>(
    baseline: &[EvaluationReport],
    bundled: &[EvaluationReport],
    w: W,
) -> Result<(), PipelineError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["level", "metric", "baseline", "bundled", "M"])?;
    let fmt = crate::hierarchy::format_value;
    for (a, b) in baseline.iter().zip(bundled) {
        // Bundle rows describe different series in the two hierarchies.
        if a.level == Level::Bundle {
            continue;
        }
        let m = a.m.to_string();
        let level = a.level.as_str();
        for (metric, x, y) in [("nmae", a.nmae, b.nmae), ("rmse", a.rmse, b.rmse), ("ed", a.ed, b.ed)] {
            wtr.write_record([level, metric, &fmt(x), &fmt(y), &m])?;
        }
        if let (Some(x), Some(y)) = (a.vs, b.vs) {
            wtr.write_record([level, "vs", &fmt(x), &fmt(y), &m])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub manifest: Manifest,
    pub reports: Vec<EvaluationReport>,
    pub raw_reports: Vec<EvaluationReport>,
    pub baseline_reports: Option<Vec<EvaluationReport>>,
}

impl RunSummary {
    pub fn fleet_nmae(&self) -> f64 {
        self.reports[0].nmae
    }

    pub fn baseline_fleet_nmae(&self) -> Option<f64> {
        self.baseline_reports.as_ref().map(|r| r[0].nmae)
    }
}

/// Bundle, forecast, reconcile and evaluate; optionally the `K = 1` baseline too.
pub fn run(cfg: &RunConfig, config_bytes: &[u8], out_dir: Option<&Path>) -> Result<RunSummary, PipelineError> {
    let panel = load_panel(cfg)?;
    let split = split_for(cfg, &panel)?;
    let stage = bundle_stage(cfg, &panel, &split)?;
    let main = predict_reconcile_evaluate(cfg, &panel, &stage.bundling, &split)?;
    let baseline = if cfg.baseline {
        // No bundling: one bundle holding every asset, whatever the diameter.
        let single = Bundling::single(panel.asset_ids());
        Some((predict_reconcile_evaluate(cfg, &panel, &single, &split)?, single))
    } else {
        None
    };

    let dir = out_dir.unwrap_or(&cfg.output_dir).to_path_buf();
    let mut out = Outputs::new(&dir)?;
    write_hierarchy(&mut out, "", &stage.bundling, &main)?;
    if let Some((b, single)) = &baseline {
        write_hierarchy(&mut out, &format!("{BASELINE_DIR}/"), single, b)?;
        out.write(COMPARISON_FILE, |w| write_comparison(&b.reports, &main.reports, w))?;
    }
    let manifest = Manifest {
        config_sha256: super::sha256_hex(config_bytes),
        inputs: vec![InputHash::of_file(&cfg.assets_path)?, InputHash::of_file(&cfg.series_path)?],
        modules: Manifest::modules(),
        method: cfg.method.to_string(),
        k: stage.bundling.k(),
        diameter_km: cfg.diameter.to_string(),
        objective: stage.objective,
        diameter_violations: stage.diameter_violations,
        test_origins: main.rolling.test_origins.len(),
        in_sample_origins: main.rolling.in_sample_origins.len(),
        skipped_test_origins: main.rolling.skipped_test.len(),
        skipped_in_sample_origins: main.rolling.skipped_in_sample.len(),
        max_incoherence_mw: main.reconciled.forecasts.max_incoherence(&stage.bundling),
        baseline: cfg.baseline,
        files: out.names.clone(),
    };
    let json = manifest.to_json();
    out.write(MANIFEST_FILE, |w| Ok(w.write_all(json.as_bytes())?))?;
    let files = out.commit();
    Ok(RunSummary {
        out_dir: dir,
        files,
        manifest,
        raw_reports: main.raw_reports,
        reports: main.reports,
        baseline_reports: baseline.map(|(b, _)| b.reports),
    })
}

fn read_bundling(dir: &Path, panel: &AssetPanel) -> Result<Bundling, PipelineError> {
    Bundling::read_csv(open(&dir.join(BUNDLING_FILE))?, &panel.asset_ids()).at(Stage::Ingest)
}

fn read_forecast(path: &Path, layout: &HierarchyLayout) -> Result<HierarchyForecast, PipelineError> {
    HierarchyForecast::read_csv(open(path)?, layout).at(Stage::Ingest)
}

/// `bundle` subcommand: writes the bundling file.
pub fn run_bundle(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<BundleStage, PipelineError> {
    let panel = load_panel(cfg)?;
    let split = split_for(cfg, &panel)?;
    let stage = bundle_stage(cfg, &panel, &split)?;
    let mut out = Outputs::new(out_dir.unwrap_or(&cfg.output_dir))?;
    out.write(BUNDLING_FILE, |w| stage.bundling.write_csv(w).at(Stage::Output))?;
    out.commit();
    Ok(stage)
}

/// `forecast` subcommand: reads the bundling, writes test forecasts and residual moments.
pub fn run_forecast(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<RollingOutput, PipelineError> {
    let dir = out_dir.unwrap_or(&cfg.output_dir);
    let panel = load_panel(cfg)?;
    let split = split_for(cfg, &panel)?;
    let bundling = read_bundling(dir, &panel)?;
    let rolling = forecast_stage(cfg, &panel, &bundling, &split)?;
    let moments = ResidualMoments::from_rolling(&panel, &bundling, &rolling)?;
    let mut out = Outputs::new(dir)?;
    out.write(FORECASTS_FILE, |w| rolling.test.write_csv(w).at(Stage::Output))?;
    out.write(MOMENTS_FILE, |w| moments.write_csv(w))?;
    out.commit();
    Ok(rolling)
}

/// `reconcile` subcommand: reads forecasts and moments, writes reconciled forecasts and diagnostics.
pub fn run_reconcile(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<Reconciled, PipelineError> {
    let dir = out_dir.unwrap_or(&cfg.output_dir);
    let panel = load_panel(cfg)?;
    let bundling = read_bundling(dir, &panel)?;
    let layout = HierarchyLayout::from_bundling(&bundling);
    let raw = read_forecast(&dir.join(FORECASTS_FILE), &layout)?;
    let moments = ResidualMoments::read_csv(open(&dir.join(MOMENTS_FILE))?, &layout)?;
    let rec = reconcile_stage(&panel, &bundling, &raw, &moments)?;
    let mut out = Outputs::new(dir)?;
    out.write(RECONCILED_FILE, |w| rec.forecasts.write_csv(w).at(Stage::Output))?;
    out.write(DIAGNOSTICS_FILE, |w| {
        rec.model.write_diagnostics(&rec.bound_violations, w).at(Stage::Output)
    })?;
    out.commit();
    Ok(rec)
}

/// `evaluate` subcommand: scores the raw and reconciled forecast files.
pub fn run_evaluate(
    cfg: &RunConfig,
    out_dir: Option<&Path>,
) -> Result<(Vec<EvaluationReport>, Vec<EvaluationReport>), PipelineError> {
    let dir = out_dir.unwrap_or(&cfg.output_dir);
    let panel = load_panel(cfg)?;
    let bundling = read_bundling(dir, &panel)?;
    let layout = HierarchyLayout::from_bundling(&bundling);
    let raw = read_forecast(&dir.join(FORECASTS_FILE), &layout)?;
    let reconciled = read_forecast(&dir.join(RECONCILED_FILE), &layout)?;
    let (a, b) = evaluate_stage(&panel, &bundling, &raw, &reconciled)?;
    let mut out = Outputs::new(dir)?;
    out.write(RAW_REPORT_FILE, |w| write_report(&a, w).at(Stage::Output))?;
    out.write(REPORT_FILE, |w| write_report(&b, w).at(Stage::Output))?;
    out.commit();
    Ok((a, b))
}
