use crate::criterion::{covariance, CriterionMatrix};
use crate::geo::DistanceMatrix;
use crate::panel::AssetPanel;

use super::{assignment_objective, Bundling, BundlingConfig, BundlingError, Diameter};

/// Enumeration guard. The worst case, S(12, 5), is about 1.38M partitions.
pub const EXACT_MAX_ASSETS: usize = 12;

/// Optimal feasible partition by enumeration of all set partitions into
/// exactly `K` blocks, returned with its objective.
pub fn exact_bundle(
    panel: &AssetPanel,
    d: &DistanceMatrix,
    cfg: &BundlingConfig,
) -> Result<(Bundling, f64), BundlingError> {
    let sigma = covariance(panel, cfg.criterion)?;
    exact_bundle_with_matrix(&sigma, d, cfg.k, cfg.diameter, panel.asset_ids())
}

/// Partitions are enumerated as restricted growth strings (asset 0 in block 0,
/// each later asset in an existing block or the next new one). This is the
/// canonical labelling by smallest member, so each partition is visited once,
/// in lexicographic order; the first strict minimum wins ties.
pub fn exact_bundle_with_matrix(
    sigma: &CriterionMatrix,
    d: &DistanceMatrix,
    k: usize,
    diameter: Diameter,
    asset_ids: Vec<String>,
) -> Result<(Bundling, f64), BundlingError> {
    let n = sigma.dim();
    if d.len() != n || asset_ids.len() != n {
        return Err(BundlingError::DimensionMismatch(format!(
            "criterion {n}, distances {}, assets {}",
            d.len(),
            asset_ids.len()
        )));
    }
    if n > EXACT_MAX_ASSETS {
        return Err(BundlingError::TooLarge {
            n,
            max: EXACT_MAX_ASSETS,
        });
    }
    if k < 1 || k > n {
        return Err(BundlingError::InvalidConfig(format!("K must be in 1..={n}, got {k}")));
    }
    diameter.validate()?;

    let mut search = Search {
        sigma,
        d,
        diameter,
        n,
        k,
        labels: vec![0; n],
        blocks: Vec::with_capacity(k),
        best: None,
    };
    search.descend(0, 0.0);
    let (value, labels) = search.best.ok_or(BundlingError::Infeasible { k })?;
    Ok((Bundling::from_assignment(&labels, asset_ids)?, value))
}

struct Search<'a> {
    sigma: &'a CriterionMatrix,
    d: &'a DistanceMatrix,
    diameter: Diameter,
    n: usize,
    k: usize,
    labels: Vec<usize>,
    blocks: Vec<Vec<usize>>,
    best: Option<(f64, Vec<usize>)>,
}

impl Search<'_> {
    fn descend(&mut self, i: usize, partial: f64) {
        if i == self.n {
            if self.blocks.len() == self.k {
                self.consider(partial);
            }
            return;
        }
        let used = self.blocks.len();
        // Remaining assets must still be able to open the missing blocks.
        if self.k - used > self.n - i {
            return;
        }
        for b in 0..used {
            if !self.blocks[b].iter().all(|&j| self.diameter.allows(self.d.get(i, j))) {
                continue;
            }
            let delta = self.sigma.get(i, i)
                + 2.0 * self.blocks[b].iter().map(|&j| self.sigma.get(i, j)).sum::<f64>();
            self.blocks[b].push(i);
            self.labels[i] = b;
            self.descend(i + 1, partial + delta);
            self.blocks[b].pop();
        }
        if used < self.k {
            self.blocks.push(vec![i]);
            self.labels[i] = used;
            self.descend(i + 1, partial + self.sigma.get(i, i));
            self.blocks.pop();
        }
    }

    fn consider(&mut self, incremental: f64) {
        // Compare on the canonical from-scratch value so near-ties are decided
        // the same way `objective` would decide them.
        if let Some((bv, _)) = &self.best {
            if incremental > bv + 1e-9 * bv.abs().max(1.0) {
                return;
            }
        }
        // Blocks are filled in ascending asset order, matching `Bundling::members`.
        let value = assignment_objective(&self.blocks, self.sigma);
        if self.best.as_ref().is_none_or(|(bv, _)| value < *bv) {
            self.best = Some((value, self.labels.clone()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criterion::CriterionKind;
    use nalgebra::{dmatrix, DMatrix};

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i}")).collect()
    }

    /// Stirling numbers of the second kind, for counting checks.
    fn stirling2(n: usize, k: usize) -> usize {
        if n == k {
            return 1;
        }
        if k == 0 || k > n {
            return 0;
        }
        k * stirling2(n - 1, k) + stirling2(n - 1, k - 1)
    }

    #[test]
    fn n_equals_k_is_identity() {
        let s = CriterionMatrix::new(CriterionKind::Variance, dmatrix![2.0, 1.0; 1.0, 3.0]).unwrap();
        let d = DistanceMatrix::from_matrix(DMatrix::zeros(2, 2)).unwrap();
        let (b, v) = exact_bundle_with_matrix(&s, &d, 2, Diameter::Unbounded, ids(2)).unwrap();
        assert_eq!(b.assignment(), &[0, 1]);
        assert_eq!(v, 5.0);
    }

    #[test]
    fn anticorrelated_pair_single_bundle() {
        let s = CriterionMatrix::new(CriterionKind::Variance, dmatrix![0.25, -0.25; -0.25, 0.25])
            .unwrap();
        let d = DistanceMatrix::from_matrix(dmatrix![0.0, 1000.0; 1000.0, 0.0]).unwrap();
        let (b, v) = exact_bundle_with_matrix(&s, &d, 1, Diameter::Unbounded, ids(2)).unwrap();
        assert_eq!(b.k(), 1);
        assert_eq!(v, 0.0);
        assert!(matches!(
            exact_bundle_with_matrix(&s, &d, 1, Diameter::Km(500.0), ids(2)),
            Err(BundlingError::Infeasible { k: 1 })
        ));
    }

    #[test]
    fn too_large() {
        let s = CriterionMatrix::new(CriterionKind::Variance, DMatrix::identity(13, 13)).unwrap();
        let d = DistanceMatrix::from_matrix(DMatrix::zeros(13, 13)).unwrap();
        assert!(matches!(
            exact_bundle_with_matrix(&s, &d, 2, Diameter::Unbounded, ids(13)),
            Err(BundlingError::TooLarge { n: 13, .. })
        ));
    }

    #[test]
    fn ties_pick_smallest_canonical_assignment() {
        // Zero matrix: every partition ties, the first in lexicographic order is [0,0,..,0,1].
        let s = CriterionMatrix::new(CriterionKind::Variance, DMatrix::zeros(4, 4)).unwrap();
        let d = DistanceMatrix::from_matrix(DMatrix::zeros(4, 4)).unwrap();
        let (b, _) = exact_bundle_with_matrix(&s, &d, 2, Diameter::Unbounded, ids(4)).unwrap();
        assert_eq!(b.assignment(), &[0, 0, 0, 1]);
    }

    #[test]
    fn visits_every_partition() {
        // With a generic matrix, the minimum found must match a brute-force scan over
        // all K^N labelings (canonicalised), which also confirms the search is exhaustive.
        let n = 6;
        let x = DMatrix::from_fn(n, 25, |i, t| ((i * 31 + t * 17 + i * t) % 23) as f64);
        let s = crate::criterion::covariance_of(&x, CriterionKind::SaVar).unwrap();
        let d = DistanceMatrix::from_matrix(DMatrix::zeros(n, n)).unwrap();
        for k in 1..=n {
            let (_, v) = exact_bundle_with_matrix(&s, &d, k, Diameter::Unbounded, ids(n)).unwrap();
            let mut best = f64::INFINITY;
            let mut distinct = std::collections::HashSet::new();
            let total = k.pow(n as u32);
            for code in 0..total {
                let labels: Vec<usize> = (0..n).map(|i| (code / k.pow(i as u32)) % k).collect();
                let b = Bundling::from_assignment(&labels, ids(n)).unwrap();
                if b.k() != k {
                    continue;
                }
                distinct.insert(b.assignment().to_vec());
                best = best.min(assignment_objective(&b.members(), &s));
            }
            assert_eq!(distinct.len(), stirling2(n, k));
            assert!((v - best).abs() <= 1e-9 * best.abs().max(1.0), "k={k}: {v} vs {best}");
        }
    }
}
