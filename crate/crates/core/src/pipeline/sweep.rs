use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::bundling::{diameter_sweep, SweepRow};
use crate::criterion::CriterionKind;
use crate::geo::haversine_matrix;
use crate::hierarchy::format_value;

use super::{load_panel, split_for, PipelineError, RunConfig, Stage, StageExt};

pub const SWEEP_FILE: &str = "sweep.csv";

/// Greedy objective per configured diameter, for SAVar and Imcy, on the training window.
pub fn run_sweep(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<(PathBuf, Vec<SweepRow>), PipelineError> {
    let diameters = cfg
        .diameters
        .as_ref()
        .ok_or_else(|| PipelineError::Config("sweep needs a `diameters` list".into()))?;
    let panel = load_panel(cfg)?;
    let split = split_for(cfg, &panel)?;
    let train = panel.slice_steps(split.train.start, split.train.end).at(Stage::Sweep)?;
    let d = haversine_matrix(panel.assets()).at(Stage::Sweep)?;
    let mut rows = Vec::new();
    for kind in [CriterionKind::Imcy, CriterionKind::SaVar] {
        rows.extend(diameter_sweep(&train, &d, kind, cfg.k, diameters).at(Stage::Sweep)?);
    }
    let dir = out_dir.unwrap_or(&cfg.output_dir);
    std::fs::create_dir_all(dir)?;
    let path = dir.join(SWEEP_FILE);
    let mut w = BufWriter::new(File::create(&path)?);
    if let Err(e) = write_sweep(&rows, &mut w).and_then(|_| Ok(w.flush()?)) {
        let _ = std::fs::remove_file(&path);
        return Err(e);
    }
    Ok((path, rows))
}

/// Writes `diameter_km,criterion,objective,feasible`; infeasible rows leave `objective` empty.
pub fn write_sweep<W: Write>(rows: &[SweepRow], w: W) -> Result<(), PipelineError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["diameter_km", "criterion", "objective", "feasible"])?;
    for r in rows {
        wtr.write_record([
            r.diameter.to_string(),
            r.criterion.as_str().to_string(),
            r.objective.map(format_value).unwrap_or_default(),
            r.feasible().to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundling::Diameter;

    #[test]
    fn header_only_and_single_row() {
        let mut buf = Vec::new();
        write_sweep(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "diameter_km,criterion,objective,feasible\n");
        let rows = [
            SweepRow {
                diameter: Diameter::Km(250.0),
                criterion: CriterionKind::Imcy,
                objective: Some(1.5),
            },
            SweepRow {
                diameter: Diameter::Unbounded,
                criterion: CriterionKind::SaVar,
                objective: None,
            },
        ];
        let mut buf = Vec::new();
        write_sweep(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "diameter_km,criterion,objective,feasible\n250,imcy,1.5,true\nunbounded,savar,,false\n"
        );
    }
}
