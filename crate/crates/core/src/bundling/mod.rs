//! Asset bundling: partition assets into `K` bundles minimising a criterion
//! quadratic form subject to a maximum bundle diameter.

mod exact;
mod greedy;
mod kmeans;
mod sweep;

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::criterion::{CriterionError, CriterionKind, CriterionMatrix};
use crate::geo::DistanceMatrix;

pub use exact::{exact_bundle, exact_bundle_with_matrix, EXACT_MAX_ASSETS};
pub use greedy::{greedy_bundle, greedy_bundle_with_matrix, GreedyOutcome, Merge};
pub use kmeans::{kmeans_bundle, KMeansOutcome, KMEANS_MAX_ITER};
pub use sweep::{diameter_sweep, diameter_sweep_with, SweepRow, SweepSolver};

#[derive(Debug, Error)]
pub enum BundlingError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid bundling: {0}")]
    InvalidBundling(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("no feasible merge remains at {reached} bundles (target {target})")]
    InfeasibleMerge { reached: usize, target: usize },
    #[error("exact enumeration supports at most {max} assets, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("no partition into {k} bundles satisfies the diameter constraint")]
    Infeasible { k: usize },
    #[error("unknown asset id {0} in bundling file")]
    UnknownAsset(String),
    #[error(transparent)]
    Criterion(#[from] CriterionError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Maximum allowed distance between two assets of the same bundle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Diameter {
    Unbounded,
    Km(f64),
}

impl Diameter {
    pub fn allows(self, distance_km: f64) -> bool {
        match self {
            Self::Unbounded => true,
            Self::Km(limit) => distance_km <= limit,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, Self::Unbounded)
    }

    pub fn validate(self) -> Result<(), BundlingError> {
        match self {
            Self::Km(v) if !(v.is_finite() && v > 0.0) => Err(BundlingError::InvalidConfig(
                format!("diameter must be positive, got {v}"),
            )),
            _ => Ok(()),
        }
    }

    /// Sort key; unbounded compares above every finite cap.
    pub fn as_f64(self) -> f64 {
        match self {
            Self::Unbounded => f64::INFINITY,
            Self::Km(v) => v,
        }
    }
}

impl From<f64> for Diameter {
    fn from(v: f64) -> Self {
        if v.is_infinite() {
            Self::Unbounded
        } else {
            Self::Km(v)
        }
    }
}

impl fmt::Display for Diameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Unbounded => f.write_str("unbounded"),
            Self::Km(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for Diameter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unbounded" | "inf" | "infinity" | "none" => Ok(Self::Unbounded),
            other => {
                let v: f64 = other.parse().map_err(|_| format!("bad diameter {s:?}"))?;
                let d = Diameter::from(v);
                d.validate().map_err(|e| e.to_string())?;
                Ok(d)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundlingConfig {
    pub k: usize,
    pub criterion: CriterionKind,
    pub diameter: Diameter,
    /// Seed for k-means++ initialisation; ignored by the other methods.
    pub seed: u64,
}

impl BundlingConfig {
    pub fn new(k: usize, criterion: CriterionKind, diameter: Diameter) -> Self {
        Self {
            k,
            criterion,
            diameter,
            seed: 0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), BundlingError> {
        if self.k < 1 || self.k > n {
            return Err(BundlingError::InvalidConfig(format!(
                "K must be in 1..={n}, got {}",
                self.k
            )));
        }
        self.diameter.validate()
    }
}

/// A partition of the panel's assets into `K` non-empty bundles.
///
/// Bundles are labelled in order of their smallest member index, so two
/// equal partitions always have equal `assignment` vectors.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bundling {
    assignment: Vec<usize>,
    k: usize,
    asset_ids: Vec<String>,
}

impl Bundling {
    /// Builds a canonical bundling from arbitrary per-asset labels.
    pub fn from_assignment(labels: &[usize], asset_ids: Vec<String>) -> Result<Self, BundlingError> {
        if labels.len() != asset_ids.len() {
            return Err(BundlingError::DimensionMismatch(format!(
                "{} labels for {} assets",
                labels.len(),
                asset_ids.len()
            )));
        }
        if labels.is_empty() {
            return Err(BundlingError::InvalidBundling("no assets".into()));
        }
        let (assignment, k) = canonicalize(labels);
        Ok(Self {
            assignment,
            k,
            asset_ids,
        })
    }

    /// Builds a bundling from a `K x N` 0/1 matrix, checking both partition constraints.
    pub fn from_lambda(lambda: &DMatrix<f64>, asset_ids: Vec<String>) -> Result<Self, BundlingError> {
        if lambda.ncols() != asset_ids.len() {
            return Err(BundlingError::DimensionMismatch(format!(
                "lambda has {} columns for {} assets",
                lambda.ncols(),
                asset_ids.len()
            )));
        }
        if lambda.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(BundlingError::InvalidBundling("entries must be 0 or 1".into()));
        }
        for (k, row) in lambda.row_iter().enumerate() {
            if row.sum() < 1.0 {
                return Err(BundlingError::InvalidBundling(format!("bundle {k} is empty")));
            }
        }
        let mut labels = Vec::with_capacity(lambda.ncols());
        for (i, col) in lambda.column_iter().enumerate() {
            if col.sum() != 1.0 {
                return Err(BundlingError::InvalidBundling(format!(
                    "asset {i} must belong to exactly one bundle"
                )));
            }
            labels.push(col.iter().position(|&v| v == 1.0).unwrap());
        }
        Self::from_assignment(&labels, asset_ids)
    }

    pub fn singletons(asset_ids: Vec<String>) -> Self {
        let n = asset_ids.len();
        Self {
            assignment: (0..n).collect(),
            k: n,
            asset_ids,
        }
    }

    pub fn single(asset_ids: Vec<String>) -> Self {
        Self {
            assignment: vec![0; asset_ids.len()],
            k: 1,
            asset_ids,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_assets(&self) -> usize {
        self.assignment.len()
    }

    /// Bundle index of every asset.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn bundle_of(&self, asset: usize) -> usize {
        self.assignment[asset]
    }

    /// Member asset indices of each bundle, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &b) in self.assignment.iter().enumerate() {
            out[b].push(i);
        }
        out
    }

    /// The `K x N` assignment matrix.
    pub fn lambda(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.k, self.n_assets());
        for (i, &b) in self.assignment.iter().enumerate() {
            m[(b, i)] = 1.0;
        }
        m
    }

    /// Sums member capacities per bundle.
    pub fn bundle_totals(&self, per_asset: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for (i, &b) in self.assignment.iter().enumerate() {
            out[b] += per_asset[i];
        }
        out
    }

    /// Writes `bundle_id,asset_id`, grouped by bundle.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), BundlingError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["bundle_id", "asset_id"])?;
        for (b, members) in self.members().iter().enumerate() {
            for &i in members {
                wtr.write_record([b.to_string(), self.asset_ids[i].clone()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a bundling file against the panel's asset order.
    pub fn read_csv<R: Read>(r: R, asset_ids: &[String]) -> Result<Self, BundlingError> {
        let index: HashMap<&str, usize> = asset_ids
            .iter()
            .enumerate()
            .map(|(i, a)| (a.as_str(), i))
            .collect();
        let mut labels = vec![usize::MAX; asset_ids.len()];
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["bundle_id", "asset_id"] {
            return Err(BundlingError::InvalidBundling("header must be bundle_id,asset_id".into()));
        }
        for rec in rdr.records() {
            let rec = rec?;
            let b: usize = rec[0]
                .parse()
                .map_err(|_| BundlingError::InvalidBundling(format!("bad bundle id {:?}", &rec[0])))?;
            let i = *index
                .get(&rec[1])
                .ok_or_else(|| BundlingError::UnknownAsset(rec[1].to_string()))?;
            if labels[i] != usize::MAX {
                return Err(BundlingError::InvalidBundling(format!("asset {} listed twice", &rec[1])));
            }
            labels[i] = b;
        }
        if let Some(i) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(BundlingError::InvalidBundling(format!(
                "asset {} has no bundle",
                asset_ids[i]
            )));
        }
        Self::from_assignment(&labels, asset_ids.to_vec())
    }
}

/// Relabels so that bundles appear in order of their smallest member.
fn canonicalize(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map: HashMap<usize, usize> = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// `tr(L * sigma * L^T)`, summed bundle by bundle over member pairs.
pub fn objective(bundling: &Bundling, sigma: &CriterionMatrix) -> Result<f64, BundlingError> {
    if sigma.dim() != bundling.n_assets() {
        return Err(BundlingError::DimensionMismatch(format!(
            "criterion is {0}x{0}, bundling has {1} assets",
            sigma.dim(),
            bundling.n_assets()
        )));
    }
    Ok(assignment_objective(&bundling.members(), sigma))
}

pub(crate) fn assignment_objective(members: &[Vec<usize>], sigma: &CriterionMatrix) -> f64 {
    let mut total = 0.0;
    for m in members {
        let mut block = 0.0;
        for &i in m {
            for &j in m {
                block += sigma.get(i, j);
            }
        }
        total += block;
    }
    total
}

/// One intra-bundle pair further apart than the diameter cap.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub bundle: usize,
    pub i: usize,
    pub j: usize,
    pub distance_km: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub violations: Vec<Violation>,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_feasible(
    bundling: &Bundling,
    d: &DistanceMatrix,
    diameter: Diameter,
) -> Result<Feasibility, BundlingError> {
    if d.len() != bundling.n_assets() {
        return Err(BundlingError::DimensionMismatch(format!(
            "distance matrix is {0}x{0}, bundling has {1} assets",
            d.len(),
            bundling.n_assets()
        )));
    }
    let mut violations = Vec::new();
    for (b, members) in bundling.members().iter().enumerate() {
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                if !diameter.allows(d.get(i, j)) {
                    violations.push(Violation {
                        bundle: b,
                        i,
                        j,
                        distance_km: d.get(i, j),
                    });
                }
            }
        }
    }
    Ok(Feasibility { violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i}")).collect()
    }

    fn anticorrelated() -> CriterionMatrix {
        CriterionMatrix::new(CriterionKind::Variance, dmatrix![0.25, -0.25; -0.25, 0.25]).unwrap()
    }

    #[test]
    fn identity_bundling_gives_trace() {
        let sigma = anticorrelated();
        let b = Bundling::singletons(ids(2));
        assert_eq!(objective(&b, &sigma).unwrap(), 0.5);
    }

    #[test]
    fn bundling_the_anticorrelated_pair_cancels_variance() {
        let b = Bundling::single(ids(2));
        assert_eq!(objective(&b, &anticorrelated()).unwrap(), 0.0);
    }

    #[test]
    fn objective_matches_matrix_trace() {
        let sigma = CriterionMatrix::new(
            CriterionKind::Variance,
            dmatrix![2.0, 0.5, -1.0; 0.5, 1.0, 0.3; -1.0, 0.3, 3.0],
        )
        .unwrap();
        let b = Bundling::from_assignment(&[1, 0, 1], ids(3)).unwrap();
        let l = b.lambda();
        let tr = (&l * sigma.sigma() * l.transpose()).trace();
        assert!((objective(&b, &sigma).unwrap() - tr).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let b = Bundling::singletons(ids(3));
        assert!(matches!(
            objective(&b, &anticorrelated()),
            Err(BundlingError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn canonical_labels() {
        let b = Bundling::from_assignment(&[7, 3, 7, 9], ids(4)).unwrap();
        assert_eq!(b.assignment(), &[0, 1, 0, 2]);
        assert_eq!(b.k(), 3);
        assert_eq!(b.members(), vec![vec![0, 2], vec![1], vec![3]]);
    }

    #[test]
    fn lambda_constraints_are_enforced() {
        let ok = dmatrix![1.0, 0.0, 1.0; 0.0, 1.0, 0.0];
        assert_eq!(Bundling::from_lambda(&ok, ids(3)).unwrap().k(), 2);
        let empty_row = dmatrix![1.0, 1.0, 1.0; 0.0, 0.0, 0.0];
        assert!(Bundling::from_lambda(&empty_row, ids(3)).is_err());
        let double = dmatrix![1.0, 1.0, 1.0; 1.0, 0.0, 0.0];
        assert!(Bundling::from_lambda(&double, ids(3)).is_err());
    }

    #[test]
    fn feasibility_checks() {
        let d = DistanceMatrix::from_matrix(dmatrix![0.0, 1000.0; 1000.0, 0.0]).unwrap();
        let singles = Bundling::singletons(ids(2));
        assert!(check_feasible(&singles, &d, Diameter::Km(1.0)).unwrap().is_feasible());
        let joined = Bundling::single(ids(2));
        let f = check_feasible(&joined, &d, Diameter::Km(500.0)).unwrap();
        assert_eq!(
            f.violations,
            vec![Violation {
                bundle: 0,
                i: 0,
                j: 1,
                distance_km: 1000.0
            }]
        );
        assert!(check_feasible(&joined, &d, Diameter::Unbounded).unwrap().is_feasible());
    }

    #[test]
    fn csv_round_trip_orders_by_smallest_member() {
        let b = Bundling::from_assignment(&[1, 0, 1, 2], ids(4)).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "bundle_id,asset_id\n0,w0\n0,w2\n1,w1\n2,w3\n");
        let back = Bundling::read_csv(buf.as_slice(), &ids(4)).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn parses_diameter() {
        assert_eq!("unbounded".parse::<Diameter>().unwrap(), Diameter::Unbounded);
        assert_eq!("500".parse::<Diameter>().unwrap(), Diameter::Km(500.0));
        assert!("-3".parse::<Diameter>().is_err());
    }
}
