use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bpr_core::metrics::EvaluationReport;
use bpr_core::pipeline::{
    self, synth, PipelineError, RunConfig, SynthConfig,
};

#[derive(Parser)]
#[command(name = "bpr", version, about = "Bundle, predict and reconcile hierarchical wind forecasts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Path to the TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic asset table and series panel.
    Synth(Common),
    /// Learn a bundling and write `bundling.csv`.
    Bundle(Common),
    /// Rolling-origin forecasts for every hierarchy level.
    Forecast(Common),
    /// Reconcile `forecasts.csv` with per-lead WLS weights.
    Reconcile(Common),
    /// Score raw and reconciled forecasts.
    Evaluate(Common),
    /// All stages end to end, plus the K = 1 baseline when configured.
    Run(Common),
    /// Greedy objective across the configured diameters.
    Sweep(Common),
}

fn print_reports(title: &str, reports: &[EvaluationReport]) {
    println!("{title}");
    for r in reports {
        let vs = r.vs.map(|v| format!("  vs {v:.4}")).unwrap_or_default();
        println!(
            "  {:<6} nmae {:>7.3}%  rmse {:>9.3}  ed {:>10.3}{vs}  (M = {})",
            r.level.as_str(),
            r.nmae,
            r.rmse,
            r.ed,
            r.m
        );
    }
}

fn load(c: &Common) -> Result<(RunConfig, Vec<u8>), PipelineError> {
    RunConfig::load(&c.config)
}

fn out(c: &Common) -> Option<&Path> {
    c.out.as_deref()
}

fn dispatch(cmd: Command) -> Result<(), PipelineError> {
    match cmd {
        Command::Synth(c) => {
            let cfg = SynthConfig::load(&c.config)?;
            let dir = c.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
            let (a, s) = synth::synth_to_dir(&cfg, &dir)?;
            println!("wrote {} and {}", a.display(), s.display());
        }
        Command::Bundle(c) => {
            let (cfg, _) = load(&c)?;
            let stage = pipeline::run_bundle(&cfg, out(&c))?;
            print!("K = {}", stage.bundling.k());
            if let Some(v) = stage.objective {
                print!(", objective {v:.6}");
            }
            if stage.diameter_violations > 0 {
                print!(", {} pairs exceed the diameter", stage.diameter_violations);
            }
            println!();
        }
        Command::Forecast(c) => {
            let (cfg, _) = load(&c)?;
            let r = pipeline::run_forecast(&cfg, out(&c))?;
            println!(
                "{} test origins ({} skipped), {} in-sample origins ({} skipped)",
                r.test_origins.len(),
                r.skipped_test.len(),
                r.in_sample_origins.len(),
                r.skipped_in_sample.len()
            );
        }
        Command::Reconcile(c) => {
            let (cfg, _) = load(&c)?;
            let r = pipeline::run_reconcile(&cfg, out(&c))?;
            let worst = r.model.condition.iter().cloned().fold(0.0, f64::max);
            let outside: usize = r.bound_violations.iter().sum();
            println!("reconciled; worst condition number {worst:.3e}, {outside} values outside physical bounds");
        }
        Command::Evaluate(c) => {
            let (cfg, _) = load(&c)?;
            let (raw, rec) = pipeline::run_evaluate(&cfg, out(&c))?;
            print_reports("raw", &raw);
            print_reports("reconciled", &rec);
        }
        Command::Run(c) => {
            let (cfg, bytes) = load(&c)?;
            let s = pipeline::run(&cfg, &bytes, out(&c))?;
            print_reports("raw", &s.raw_reports);
            print_reports("reconciled", &s.reports);
            if let Some(b) = &s.baseline_reports {
                print_reports("baseline (K = 1), reconciled", b);
            }
            println!("wrote {} files to {}", s.files.len(), s.out_dir.display());
        }
        Command::Sweep(c) => {
            let (cfg, _) = load(&c)?;
            let (path, rows) = pipeline::run_sweep(&cfg, out(&c))?;
            println!("wrote {} rows to {}", rows.len(), path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bpr: error {e}");
            ExitCode::FAILURE
        }
    }
}
