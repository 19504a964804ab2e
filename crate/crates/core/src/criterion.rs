//! Criterion covariance matrices behind the bundling objective.
//!
//! Every criterion has the form `tr(L * C * L^T)` for an asset-level
//! covariance `C`: raw series (variance), series minus the cross-sectional
//! mean (seasonal-adjusted variance), or first differences (intermittency).
//! Covariances use the population convention.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::AssetPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionKind {
    Variance,
    #[serde(rename = "savar")]
    SaVar,
    Imcy,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 3] = [Self::Variance, Self::SaVar, Self::Imcy];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Variance => "variance",
            Self::SaVar => "savar",
            Self::Imcy => "imcy",
        }
    }

    fn min_len(self) -> usize {
        match self {
            Self::Imcy => 4,
            _ => 3,
        }
    }
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CriterionKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "variance" | "var" => Ok(Self::Variance),
            "savar" => Ok(Self::SaVar),
            "imcy" | "intermittency" => Ok(Self::Imcy),
            other => Err(format!("unknown criterion {other:?}")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CriterionError {
    #[error("{kind} needs at least {needed} samples, got {got}")]
    TooShortSeries {
        kind: CriterionKind,
        needed: usize,
        got: usize,
    },
    #[error("criterion matrix must be square and symmetric")]
    NotSymmetric,
}

/// An `N x N` symmetric positive semidefinite criterion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionMatrix {
    kind: CriterionKind,
    sigma: DMatrix<f64>,
}

impl CriterionMatrix {
    pub fn new(kind: CriterionKind, sigma: DMatrix<f64>) -> Result<Self, CriterionError> {
        if !sigma.is_square() {
            return Err(CriterionError::NotSymmetric);
        }
        let n = sigma.nrows();
        for i in 0..n {
            for j in 0..i {
                if sigma[(i, j)] != sigma[(j, i)] {
                    return Err(CriterionError::NotSymmetric);
                }
            }
        }
        Ok(Self { kind, sigma })
    }

    pub fn kind(&self) -> CriterionKind {
        self.kind
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.sigma[(i, j)]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            kind: self.kind,
            sigma: &self.sigma * c,
        }
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            kind: self.kind,
            sigma: DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.sigma[(idx[r], idx[c])]),
        }
    }
}

/// Population covariance of the rows of `x` (`N x T`). Output is exactly symmetric.
pub fn row_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let t = x.ncols() as f64;
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        let mean = row.sum() / t;
        row.add_scalar_mut(-mean);
    }
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = centered.row(i).dot(&centered.row(j)) / t;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

/// Transformed `N x T'` matrix whose row covariance is the criterion matrix.
pub fn transformed_series(values: &DMatrix<f64>, kind: CriterionKind) -> DMatrix<f64> {
    match kind {
        CriterionKind::Variance => values.clone(),
        CriterionKind::SaVar => {
            let n = values.nrows() as f64;
            let mut out = values.clone();
            for (t, mut col) in out.column_iter_mut().enumerate() {
                let mu = values.column(t).sum() / n;
                col.add_scalar_mut(-mu);
            }
            out
        }
        CriterionKind::Imcy => {
            let t = values.ncols();
            DMatrix::from_fn(values.nrows(), t - 1, |i, c| values[(i, c + 1)] - values[(i, c)])
        }
    }
}

pub fn covariance_of(values: &DMatrix<f64>, kind: CriterionKind) -> Result<CriterionMatrix, CriterionError> {
    let needed = kind.min_len();
    if values.ncols() < needed {
        return Err(CriterionError::TooShortSeries {
            kind,
            needed,
            got: values.ncols(),
        });
    }
    Ok(CriterionMatrix {
        kind,
        sigma: row_covariance(&transformed_series(values, kind)),
    })
}

pub fn covariance(panel: &AssetPanel, kind: CriterionKind) -> Result<CriterionMatrix, CriterionError> {
    covariance_of(panel.values(), kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn hand_computed_variance() {
        let x = dmatrix![1.0, 2.0, 1.0, 2.0; 2.0, 1.0, 2.0, 1.0];
        let c = covariance_of(&x, CriterionKind::Variance).unwrap();
        assert_eq!(c.sigma(), &dmatrix![0.25, -0.25; -0.25, 0.25]);
    }

    #[test]
    fn identical_rows_have_zero_savar() {
        let row = [0.3, 1.7, 2.2, 0.9, 4.0];
        let x = DMatrix::from_fn(4, 5, |_, t| row[t]);
        let c = covariance_of(&x, CriterionKind::SaVar).unwrap();
        assert!(c.sigma().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_series_have_zero_intermittency() {
        let x = DMatrix::from_fn(3, 6, |i, _| i as f64 + 1.0);
        let c = covariance_of(&x, CriterionKind::Imcy).unwrap();
        assert!(c.sigma().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_short() {
        let x = DMatrix::from_element(2, 3, 1.0);
        assert!(covariance_of(&x, CriterionKind::Variance).is_ok());
        assert_eq!(
            covariance_of(&x, CriterionKind::Imcy).unwrap_err(),
            CriterionError::TooShortSeries {
                kind: CriterionKind::Imcy,
                needed: 4,
                got: 3
            }
        );
        let x = DMatrix::from_element(2, 2, 1.0);
        assert!(covariance_of(&x, CriterionKind::SaVar).is_err());
    }

    #[test]
    fn psd_within_tolerance() {
        let x = DMatrix::from_fn(5, 40, |i, t| ((i * 7 + t * 3) % 11) as f64 * (i as f64 + 0.5));
        for kind in CriterionKind::ALL {
            let c = covariance_of(&x, kind).unwrap();
            let tr = c.sigma().trace();
            let eig = c.sigma().clone().symmetric_eigen();
            assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-8 * tr.max(1.0)));
        }
    }

    #[test]
    fn parses_names() {
        assert_eq!("SAVar".parse::<CriterionKind>().unwrap(), CriterionKind::SaVar);
        assert_eq!("imcy".parse::<CriterionKind>().unwrap(), CriterionKind::Imcy);
        assert!("kmeans".parse::<CriterionKind>().is_err());
    }
}
