//! Great-circle distances between assets.

use nalgebra::DMatrix;

use crate::panel::{AssetMeta, PanelError};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Symmetric `N x N` matrix of pairwise distances in kilometres.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    d: DMatrix<f64>,
}

impl DistanceMatrix {
    /// Wraps a precomputed matrix. Must be square, symmetric, nonnegative, zero on the diagonal.
    pub fn from_matrix(d: DMatrix<f64>) -> Result<Self, PanelError> {
        if !d.is_square() {
            return Err(PanelError::Shape("distance matrix must be square".into()));
        }
        let n = d.nrows();
        for i in 0..n {
            if d[(i, i)] != 0.0 {
                return Err(PanelError::Shape(format!("d[{i},{i}] must be zero")));
            }
            for j in 0..n {
                let v = d[(i, j)];
                if !(v.is_finite() && v >= 0.0) || v != d[(j, i)] {
                    return Err(PanelError::Shape(format!(
                        "d[{i},{j}] must be finite, nonnegative and symmetric"
                    )));
                }
            }
        }
        Ok(Self { d })
    }

    pub fn len(&self) -> usize {
        self.d.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.d.nrows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            d: DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.d[(idx[r], idx[c])]),
        }
    }
}

/// Haversine distance in km between two (lat, lon) points given in degrees.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = p2 - p1;
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

pub fn haversine_matrix(assets: &[AssetMeta]) -> Result<DistanceMatrix, PanelError> {
    for a in assets {
        a.validate()?;
    }
    let n = assets.len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = haversine_km(
                assets[i].latitude_deg,
                assets[i].longitude_deg,
                assets[j].latitude_deg,
                assets[j].longitude_deg,
            );
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(DistanceMatrix { d })
}
