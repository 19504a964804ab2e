use crate::criterion::{covariance, CriterionMatrix};
use crate::geo::DistanceMatrix;
use crate::panel::AssetPanel;

use super::{assignment_objective, Bundling, BundlingConfig, BundlingError, Diameter};

/// One step of the agglomeration: bundles `first` and `second` (indices into
/// the bundle list at that step) were merged at cross-covariance `covariance`.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub first: usize,
    pub second: usize,
    pub covariance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOutcome {
    pub bundling: Bundling,
    /// Objective tracked incrementally during the merges.
    pub objective: f64,
    pub merges: Vec<Merge>,
}

/// Greedy agglomeration under the configured criterion.
pub fn greedy_bundle(
    panel: &AssetPanel,
    d: &DistanceMatrix,
    cfg: &BundlingConfig,
) -> Result<GreedyOutcome, BundlingError> {
    let sigma = covariance(panel, cfg.criterion)?;
    greedy_bundle_with_matrix(&sigma, d, cfg.k, cfg.diameter, panel.asset_ids())
}

/// Starts from singletons and repeatedly merges the admissible pair of
/// bundles with the smallest cross-covariance `l_k^T * sigma * l_l`.
///
/// Merging `k` and `l` changes the objective by exactly twice that value.
/// Ties go to the pair with the lexicographically smallest
/// (smallest member of first bundle, smallest member of second bundle).
pub fn greedy_bundle_with_matrix(
    sigma: &CriterionMatrix,
    d: &DistanceMatrix,
    k: usize,
    diameter: Diameter,
    asset_ids: Vec<String>,
) -> Result<GreedyOutcome, BundlingError> {
    let n = sigma.dim();
    if d.len() != n || asset_ids.len() != n {
        return Err(BundlingError::DimensionMismatch(format!(
            "criterion {n}, distances {}, assets {}",
            d.len(),
            asset_ids.len()
        )));
    }
    if k < 1 || k > n {
        return Err(BundlingError::InvalidConfig(format!("K must be in 1..={n}, got {k}")));
    }
    diameter.validate()?;

    // Bundles stay sorted by smallest member: a merge keeps the lower slot.
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut cross: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| sigma.get(i, j)).collect())
        .collect();
    let mut span: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| d.get(i, j)).collect()).collect();
    let mut objective: f64 = (0..n).map(|i| sigma.get(i, i)).sum();
    let mut merges = Vec::with_capacity(n - k);

    while members.len() > k {
        let m = members.len();
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..m {
            for b in (a + 1)..m {
                if !diameter.allows(span[a][b]) {
                    continue;
                }
                let c = cross[a][b];
                if best.is_none_or(|(_, _, bc)| c < bc) {
                    best = Some((a, b, c));
                }
            }
        }
        let Some((a, b, c)) = best else {
            return Err(BundlingError::InfeasibleMerge { reached: m, target: k });
        };

        objective += 2.0 * c;
        let absorbed = members.remove(b);
        members[a].extend(absorbed);
        members[a].sort_unstable();

        let row_b = cross.remove(b);
        let self_b = row_b[b];
        for row in cross.iter_mut() {
            let v = row.remove(b);
            row[a] += v;
        }
        for (x, v) in row_b.iter().enumerate() {
            if x == b {
                continue;
            }
            let slot = if x > b { x - 1 } else { x };
            cross[a][slot] += v;
        }
        // cross[a][a] holds aa + ab + ba at this point.
        cross[a][a] += self_b;
        for x in 0..cross.len() {
            if x != a {
                let v = cross[a][x];
                cross[x][a] = v;
            }
        }

        let span_b = span.remove(b);
        for row in span.iter_mut() {
            let v = row.remove(b);
            row[a] = row[a].max(v);
        }
        for (x, v) in span_b.iter().enumerate() {
            if x == b {
                continue;
            }
            let slot = if x > b { x - 1 } else { x };
            span[a][slot] = span[a][slot].max(*v);
        }
        span[a][a] = 0.0;
        for x in 0..span.len() {
            let v = span[a][x];
            span[x][a] = v;
        }

        merges.push(Merge {
            first: a,
            second: b,
            covariance: c,
        });
    }

    let mut labels = vec![0; n];
    for (bi, m) in members.iter().enumerate() {
        for &i in m {
            labels[i] = bi;
        }
    }
    let bundling = Bundling::from_assignment(&labels, asset_ids)?;
    debug_assert!({
        let fresh = assignment_objective(&bundling.members(), sigma);
        (fresh - objective).abs() <= 1e-8 * fresh.abs().max(1.0)
    });
    Ok(GreedyOutcome {
        bundling,
        objective,
        merges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundling::{check_feasible, objective};
    use crate::criterion::CriterionKind;
    use nalgebra::{dmatrix, DMatrix};

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i}")).collect()
    }

    fn sigma(m: DMatrix<f64>) -> CriterionMatrix {
        CriterionMatrix::new(CriterionKind::Variance, m).unwrap()
    }

    #[test]
    fn two_anticorrelated_assets_merge() {
        let s = sigma(dmatrix![0.25, -0.25; -0.25, 0.25]);
        let d = DistanceMatrix::from_matrix(dmatrix![0.0, 10.0; 10.0, 0.0]).unwrap();
        let out = greedy_bundle_with_matrix(&s, &d, 1, Diameter::Km(500.0), ids(2)).unwrap();
        assert_eq!(out.bundling.assignment(), &[0, 0]);
        assert_eq!(out.objective, 0.0);
    }

    #[test]
    fn distance_blocks_the_only_merge() {
        let s = sigma(dmatrix![0.25, -0.25; -0.25, 0.25]);
        let d = DistanceMatrix::from_matrix(dmatrix![0.0, 1000.0; 1000.0, 0.0]).unwrap();
        let err = greedy_bundle_with_matrix(&s, &d, 1, Diameter::Km(500.0), ids(2)).unwrap_err();
        assert!(matches!(err, BundlingError::InfeasibleMerge { reached: 2, target: 1 }));
    }

    #[test]
    fn k_equal_n_is_identity() {
        let s = sigma(DMatrix::identity(3, 3));
        let d = DistanceMatrix::from_matrix(DMatrix::zeros(3, 3)).unwrap();
        let out = greedy_bundle_with_matrix(&s, &d, 3, Diameter::Unbounded, ids(3)).unwrap();
        assert_eq!(out.bundling.k(), 3);
        assert!(out.merges.is_empty());
    }

    #[test]
    fn ties_go_to_lowest_indices() {
        let s = sigma(DMatrix::identity(4, 4));
        let d = DistanceMatrix::from_matrix(DMatrix::zeros(4, 4)).unwrap();
        let out = greedy_bundle_with_matrix(&s, &d, 2, Diameter::Unbounded, ids(4)).unwrap();
        // Every cross term is 0 at first; (0,1) wins, then {0,1} has cross 0 with 2 and 3,
        // as do 2 and 3 with each other, so ({0,1}, {2}) is merged next.
        assert_eq!(out.bundling.assignment(), &[0, 0, 0, 1]);
    }

    #[test]
    fn bookkeeping_matches_recomputation() {
        let x = DMatrix::from_fn(7, 30, |i, t| (((i * 13 + t * 7) % 17) as f64 - 8.0) * (1.0 + i as f64 * 0.1));
        let s = crate::criterion::covariance_of(&x, CriterionKind::Variance).unwrap();
        let d = DistanceMatrix::from_matrix(DMatrix::from_fn(7, 7, |i, j| {
            (i as f64 - j as f64).abs() * 100.0
        }))
        .unwrap();
        for k in 1..=7 {
            let out = greedy_bundle_with_matrix(&s, &d, k, Diameter::Unbounded, ids(7)).unwrap();
            let fresh = objective(&out.bundling, &s).unwrap();
            assert!((fresh - out.objective).abs() <= 1e-8 * fresh.abs().max(1.0));
        }
        let out = greedy_bundle_with_matrix(&s, &d, 3, Diameter::Km(250.0), ids(7)).unwrap();
        assert!(check_feasible(&out.bundling, &d, Diameter::Km(250.0)).unwrap().is_feasible());
    }
}
