//! MinT reconciliation with WLS variance scaling, one projection per lead.
//!
//! For lead `tau`, `G = (S^T W^-1 S)^-1 S^T W^-1` with `W` the diagonal of
//! the in-sample residual second moments. Reconciled forecasts are `S G h`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::bundling::Bundling;
use crate::hierarchy::{HierarchyError, HierarchyForecast, HierarchyLayout};

/// Tolerance on `G S = I` checked when a reconciler is built.
pub const UNBIASED_TOL: f64 = 1e-8;

/// Relative floor on residual variances, in units of squared fleet capacity.
pub const WEIGHT_FLOOR_REL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ReconcileError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no in-sample origins to estimate residual variances from")]
    NoOrigins,
    #[error("weights must be finite and strictly positive (lead {lead}, row {row})")]
    NonPositiveWeight { lead: usize, row: usize },
    #[error("normal matrix is singular at lead {lead}")]
    SingularNormalMatrix { lead: usize },
    #[error("G S deviates from identity by {error:e} at lead {lead}")]
    NotUnbiased { lead: usize, error: f64 },
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// `(N+K+1) x N` matrix with rows `(1^T; L; I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummingMatrix {
    s: DMatrix<f64>,
    k: usize,
}

impl SummingMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn n_assets(&self) -> usize {
        self.s.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.s.nrows()
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

pub fn summing_matrix(bundling: &Bundling) -> SummingMatrix {
    let n = bundling.n_assets();
    let k = bundling.k();
    let mut s = DMatrix::zeros(n + k + 1, n);
    for i in 0..n {
        s[(0, i)] = 1.0;
        s[(1 + bundling.bundle_of(i), i)] = 1.0;
        s[(1 + k + i, i)] = 1.0;
    }
    SummingMatrix { s, k }
}

/// Per-lead diagonal weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadWeights {
    /// `w[lead][row]`
    pub w: Vec<Vec<f64>>,
    /// Number of origins the moments were averaged over.
    pub sample_count: usize,
    /// Entries raised to the floor, per lead.
    pub floored: Vec<usize>,
}

impl LeadWeights {
    /// Takes weights as given; every entry must be positive and finite.
    pub fn from_raw(w: Vec<Vec<f64>>, sample_count: usize) -> Result<Self, ReconcileError> {
        for (lead, row) in w.iter().enumerate() {
            if let Some(r) = row.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(ReconcileError::NonPositiveWeight { lead, row: r });
            }
        }
        let floored = vec![0; w.len()];
        Ok(Self {
            w,
            sample_count,
            floored,
        })
    }

    pub fn horizon(&self) -> usize {
        self.w.len()
    }

    pub fn identity(n_rows: usize, horizon: usize) -> Self {
        Self {
            w: vec![vec![1.0; n_rows]; horizon],
            sample_count: 0,
            floored: vec![0; horizon],
        }
    }
}

pub fn weight_floor(fleet_capacity: f64) -> f64 {
    WEIGHT_FLOOR_REL * fleet_capacity * fleet_capacity
}

/// `w[tau][r] = max(floor, mean_t eps_{t,tau,r}^2)` with `eps = forecast - actual`.
pub fn estimate_weights(
    in_sample_forecasts: &HierarchyForecast,
    actuals: &HierarchyForecast,
    floor: f64,
) -> Result<LeadWeights, ReconcileError> {
    in_sample_forecasts
        .same_shape(actuals)
        .map_err(|e| ReconcileError::ShapeMismatch(e.to_string()))?;
    let m = in_sample_forecasts.n_origins();
    if m == 0 {
        return Err(ReconcileError::NoOrigins);
    }
    let rows = in_sample_forecasts.layout().n_rows();
    let horizon = in_sample_forecasts.horizon();
    let mut sums = vec![vec![0.0; rows]; horizon];
    for (f, a) in in_sample_forecasts.blocks().iter().zip(actuals.blocks()) {
        for (lead, acc) in sums.iter_mut().enumerate() {
            for (r, s) in acc.iter_mut().enumerate() {
                let e = f[(r, lead)] - a[(r, lead)];
                *s += e * e;
            }
        }
    }
    let mean_sq = sums
        .into_iter()
        .map(|row| row.into_iter().map(|s| s / m as f64).collect())
        .collect();
    Ok(floor_weights(mean_sq, m, floor))
}

/// Raises every mean squared residual below `floor` to `floor`.
pub fn floor_weights(mean_sq: Vec<Vec<f64>>, sample_count: usize, floor: f64) -> LeadWeights {
    let mut floored = vec![0; mean_sq.len()];
    let w = mean_sq
        .into_iter()
        .enumerate()
        .map(|(lead, row)| {
            row.into_iter()
                .map(|v| {
                    if v < floor {
                        floored[lead] += 1;
                        floor
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    LeadWeights {
        w,
        sample_count,
        floored,
    }
}

/// Per lead, the number of values outside `[0, capacity]` of their row.
pub fn bound_violations(forecasts: &HierarchyForecast, row_capacities: &[f64]) -> Vec<usize> {
    let mut out = vec![0; forecasts.horizon()];
    for m in forecasts.blocks() {
        for (lead, count) in out.iter_mut().enumerate() {
            for (r, cap) in row_capacities.iter().enumerate() {
                let v = m[(r, lead)];
                if v < 0.0 || v > *cap {
                    *count += 1;
                }
            }
        }
    }
    out
}

/// Per-lead projections `G` plus build diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconcilerModel {
    s: SummingMatrix,
    g: Vec<DMatrix<f64>>,
    /// Condition number of `S^T W^-1 S` per lead.
    pub condition: Vec<f64>,
    pub floored: Vec<usize>,
}

impl ReconcilerModel {
    pub fn summing(&self) -> &SummingMatrix {
        &self.s
    }

    pub fn g(&self, lead: usize) -> &DMatrix<f64> {
        &self.g[lead]
    }

    pub fn horizon(&self) -> usize {
        self.g.len()
    }

    /// Writes `lead,condition_number,floored_weights,bound_violations`.
    pub fn write_diagnostics<W: Write>(&self, bound_violations: &[usize], mut w: W) -> Result<(), ReconcileError> {
        if bound_violations.len() != self.horizon() {
            return Err(ReconcileError::ShapeMismatch(format!(
                "{} violation counts for {} leads",
                bound_violations.len(),
                self.horizon()
            )));
        }
        writeln!(w, "lead,condition_number,floored_weights,bound_violations")?;
        for lead in 0..self.horizon() {
            writeln!(
                w,
                "{},{},{},{}",
                lead + 1,
                crate::hierarchy::format_value(self.condition[lead]),
                self.floored[lead],
                bound_violations[lead]
            )?;
        }
        Ok(())
    }
}

pub fn build_reconciler(s: &SummingMatrix, weights: &LeadWeights) -> Result<ReconcilerModel, ReconcileError> {
    let rows = s.n_rows();
    let n = s.n_assets();
    let mut g = Vec::with_capacity(weights.horizon());
    let mut condition = Vec::with_capacity(weights.horizon());
    for (lead, w) in weights.w.iter().enumerate() {
        if w.len() != rows {
            return Err(ReconcileError::ShapeMismatch(format!(
                "lead {lead} has {} weights for {rows} rows",
                w.len()
            )));
        }
        if let Some(r) = w.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(ReconcileError::NonPositiveWeight { lead, row: r });
        }
        // W^-1 S scales row r of S by 1 / w_r, so no inverse of W is formed.
        let mut winv_s = s.s.clone();
        for r in 0..rows {
            let inv = 1.0 / w[r];
            winv_s.row_mut(r).scale_mut(inv);
        }
        let st_winv = winv_s.transpose();
        let normal = &st_winv * &s.s;
        // Symmetrise away rounding so the eigen and Cholesky routines see the same matrix.
        let normal = (&normal + normal.transpose()) * 0.5;
        let eig = normal.clone().symmetric_eigen();
        let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
        condition.push(if lo > 0.0 { hi / lo } else { f64::INFINITY });
        let chol = normal
            .cholesky()
            .ok_or(ReconcileError::SingularNormalMatrix { lead })?;
        let gl = chol.solve(&st_winv);
        let err = (&gl * &s.s - DMatrix::<f64>::identity(n, n)).amax();
        if !(err <= UNBIASED_TOL) {
            return Err(ReconcileError::NotUnbiased { lead, error: err });
        }
        g.push(gl);
    }
    Ok(ReconcilerModel {
        s: s.clone(),
        g,
        condition,
        floored: weights.floored.clone(),
    })
}

/// Projects one stacked vector: `S (G h)`.
pub fn reconcile_vector(model: &ReconcilerModel, lead: usize, h: &DVector<f64>) -> DVector<f64> {
    &model.s.s * (&model.g[lead] * h)
}

pub fn reconcile(model: &ReconcilerModel, forecasts: &HierarchyForecast) -> Result<HierarchyForecast, ReconcileError> {
    let layout: &HierarchyLayout = forecasts.layout();
    if layout.n_rows() != model.s.n_rows() || layout.k() != model.s.k || forecasts.horizon() != model.horizon() {
        return Err(ReconcileError::ShapeMismatch(format!(
            "forecast has {} rows x {} leads, reconciler {} rows x {} leads",
            layout.n_rows(),
            forecasts.horizon(),
            model.s.n_rows(),
            model.horizon()
        )));
    }
    let blocks = forecasts
        .blocks()
        .iter()
        .map(|m| {
            let mut out = DMatrix::zeros(m.nrows(), m.ncols());
            for lead in 0..m.ncols() {
                let bottom = &model.g[lead] * m.column(lead);
                out.set_column(lead, &(&model.s.s * bottom));
            }
            out
        })
        .collect();
    Ok(HierarchyForecast::new(
        layout.clone(),
        forecasts.horizon(),
        forecasts.origins().to_vec(),
        blocks,
    )?)
}
