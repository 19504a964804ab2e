use crate::criterion::{covariance, CriterionKind, CriterionMatrix};
use crate::geo::DistanceMatrix;
use crate::panel::AssetPanel;

use super::{exact_bundle_with_matrix, greedy_bundle_with_matrix, BundlingError, Diameter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepSolver {
    Greedy,
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub diameter: Diameter,
    pub criterion: CriterionKind,
    /// `None` when no feasible bundling with `K` bundles was found.
    pub objective: Option<f64>,
}

impl SweepRow {
    pub fn feasible(&self) -> bool {
        self.objective.is_some()
    }
}

/// Greedy objective per diameter cap. Infeasibility is recorded in the row.
pub fn diameter_sweep(
    panel: &AssetPanel,
    d: &DistanceMatrix,
    criterion: CriterionKind,
    k: usize,
    diameters: &[Diameter],
) -> Result<Vec<SweepRow>, BundlingError> {
    let sigma = covariance(panel, criterion)?;
    diameter_sweep_with(&sigma, d, k, diameters, SweepSolver::Greedy, panel.asset_ids())
}

pub fn diameter_sweep_with(
    sigma: &CriterionMatrix,
    d: &DistanceMatrix,
    k: usize,
    diameters: &[Diameter],
    solver: SweepSolver,
    asset_ids: Vec<String>,
) -> Result<Vec<SweepRow>, BundlingError> {
    let mut rows = Vec::with_capacity(diameters.len());
    for &diameter in diameters {
        let result = match solver {
            SweepSolver::Greedy => {
                greedy_bundle_with_matrix(sigma, d, k, diameter, asset_ids.clone()).map(|o| o.objective)
            }
            SweepSolver::Exact => {
                exact_bundle_with_matrix(sigma, d, k, diameter, asset_ids.clone()).map(|(_, v)| v)
            }
        };
        let objective = match result {
            Ok(v) => Some(v),
            Err(BundlingError::InfeasibleMerge { .. } | BundlingError::Infeasible { .. }) => None,
            Err(e) => return Err(e),
        };
        rows.push(SweepRow {
            diameter,
            criterion: sigma.kind(),
            objective,
        });
    }
    Ok(rows)
}
