//! Geographic k-means baseline on raw (latitude, longitude) degrees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geo::DistanceMatrix;
use crate::panel::AssetMeta;

use super::{check_feasible, Bundling, BundlingConfig, BundlingError, Feasibility};

pub const KMEANS_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOutcome {
    pub bundling: Bundling,
    /// Diameter feasibility of the clusters; reported, not enforced.
    pub feasibility: Feasibility,
    pub iterations: usize,
    pub inertia: f64,
}

type Point = [f64; 2];

fn sq_dist(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

pub fn kmeans_bundle(
    assets: &[AssetMeta],
    d: &DistanceMatrix,
    cfg: &BundlingConfig,
) -> Result<KMeansOutcome, BundlingError> {
    let n = assets.len();
    cfg.validate(n)?;
    if d.len() != n {
        return Err(BundlingError::DimensionMismatch(format!(
            "distance matrix is {0}x{0} for {n} assets",
            d.len()
        )));
    }
    let k = cfg.k;
    let points: Vec<Point> = assets.iter().map(|a| [a.latitude_deg, a.longitude_deg]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = plus_plus_init(&points, k, &mut rng);

    let mut labels = vec![usize::MAX; n];
    let mut iterations = 0;
    for _ in 0..KMEANS_MAX_ITER {
        iterations += 1;
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let nearest = nearest(p, &centroids);
            if labels[i] != nearest {
                labels[i] = nearest;
                changed = true;
            }
        }
        repair_empty(&points, &mut labels, &centroids, k);
        let updated = recompute(&points, &labels, k);
        let moved = updated != centroids;
        centroids = updated;
        if !changed && !moved {
            break;
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum();
    let ids = assets.iter().map(|a| a.asset_id.clone()).collect();
    let bundling = Bundling::from_assignment(&labels, ids)?;
    let feasibility = check_feasible(&bundling, d, cfg.diameter)?;
    Ok(KMeansOutcome {
        bundling,
        feasibility,
        iterations,
        inertia,
    })
}

fn plus_plus_init(points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    while chosen.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .map(|p| {
                chosen
                    .iter()
                    .map(|&c| sq_dist(p, &points[c]))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, w) in weights.iter().enumerate() {
                acc += w;
                if *w > 0.0 && acc > target {
                    pick = i;
                    break;
                }
            }
            // Rounding can leave `pick` on a zero-weight point; step back to a positive one.
            if weights[pick] == 0.0 {
                pick = weights.iter().rposition(|&w| w > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // All remaining points coincide with a centre; take the first unused index.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
    }
    chosen.into_iter().map(|i| points[i]).collect()
}

fn nearest(p: &Point, centroids: &[Point]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, q) in centroids.iter().enumerate() {
        let dist = sq_dist(p, q);
        if dist < best_d {
            best = c;
            best_d = dist;
        }
    }
    best
}

/// Gives every empty cluster the point farthest from its centroid, taken from
/// a cluster that still has more than one member.
fn repair_empty(points: &[Point], labels: &mut [usize], centroids: &[Point], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let dist = sq_dist(p, &centroids[labels[i]]);
            if dist > far_d {
                far_d = dist;
                far = Some(i);
            }
        }
        match far {
            Some(i) => labels[i] = empty,
            None => return,
        }
    }
}

fn recompute(points: &[Point], labels: &[usize], k: usize) -> Vec<Point> {
    let mut sums = vec![[0.0, 0.0]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        sums[l][0] += p[0];
        sums[l][1] += p[1];
        counts[l] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| [s[0] / c as f64, s[1] / c as f64])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundling::Diameter;
    use crate::criterion::CriterionKind;
    use crate::geo::haversine_matrix;

    fn meta(i: usize, lat: f64, lon: f64) -> AssetMeta {
        AssetMeta {
            asset_id: format!("a{i}"),
            latitude_deg: lat,
            longitude_deg: lon,
            capacity_mw: 1.0,
        }
    }

    fn cfg(k: usize) -> BundlingConfig {
        BundlingConfig {
            k,
            criterion: CriterionKind::Variance,
            diameter: Diameter::Unbounded,
            seed: 7,
        }
    }

    #[test]
    fn recovers_exact_coordinate_clusters() {
        let centres = [(40.0, -95.0), (45.0, -88.0), (35.0, -100.0)];
        let mut assets = Vec::new();
        for r in 0..4 {
            for (c, &(la, lo)) in centres.iter().enumerate() {
                assets.push(meta(r * 3 + c, la, lo));
            }
        }
        let d = haversine_matrix(&assets).unwrap();
        for seed in 0..10 {
            let mut c = cfg(3);
            c.seed = seed;
            let out = kmeans_bundle(&assets, &d, &c).unwrap();
            assert_eq!(out.inertia, 0.0);
            for (i, &b) in out.bundling.assignment().iter().enumerate() {
                assert_eq!(b, out.bundling.assignment()[i % 3]);
            }
            assert_eq!(out.bundling.k(), 3);
        }
    }

    #[test]
    fn k_one_and_k_n() {
        let assets: Vec<_> = (0..6).map(|i| meta(i, 40.0 + i as f64 * 0.7, -90.0 - (i * i) as f64 * 0.3)).collect();
        let d = haversine_matrix(&assets).unwrap();
        let one = kmeans_bundle(&assets, &d, &cfg(1)).unwrap();
        assert_eq!(one.bundling.assignment(), &[0; 6]);
        let all = kmeans_bundle(&assets, &d, &cfg(6)).unwrap();
        assert_eq!(all.bundling.assignment(), &[0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn duplicates_with_k_n_still_yield_singletons() {
        let assets: Vec<_> = (0..4).map(|i| meta(i, 40.0, -90.0)).collect();
        let d = haversine_matrix(&assets).unwrap();
        let out = kmeans_bundle(&assets, &d, &cfg(4)).unwrap();
        assert_eq!(out.bundling.k(), 4);
    }

    #[test]
    fn reports_but_does_not_enforce_diameter() {
        let assets = vec![meta(0, 40.0, -90.0), meta(1, 40.0, -80.0), meta(2, 30.0, -90.0)];
        let d = haversine_matrix(&assets).unwrap();
        let mut c = cfg(1);
        c.diameter = Diameter::Km(100.0);
        let out = kmeans_bundle(&assets, &d, &c).unwrap();
        assert_eq!(out.bundling.k(), 1);
        assert_eq!(out.feasibility.violations.len(), 3);
    }

    #[test]
    fn rejects_k_above_n() {
        let assets = vec![meta(0, 40.0, -90.0)];
        let d = haversine_matrix(&assets).unwrap();
        assert!(kmeans_bundle(&assets, &d, &cfg(2)).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let assets: Vec<_> = (0..20)
            .map(|i| meta(i, 35.0 + ((i * 7) % 13) as f64, -100.0 + ((i * 11) % 17) as f64))
            .collect();
        let d = haversine_matrix(&assets).unwrap();
        let a = kmeans_bundle(&assets, &d, &cfg(4)).unwrap();
        let b = kmeans_bundle(&assets, &d, &cfg(4)).unwrap();
        assert_eq!(a, b);
    }
}
