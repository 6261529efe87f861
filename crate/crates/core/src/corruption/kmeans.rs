//! Lloyd's k-means with k-means++ seeding, and the silhouette score.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::error::{invalid, Result};
use crate::rng::seeded;

const MAX_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: ArrayView1<'_, f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.outer_iter().enumerate() {
        let d = sq_dist(row, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds(x: ArrayView2<'_, f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = x.outer_iter().map(|r| sq_dist(r, x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, r) in x.outer_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, x.row(next)));
        }
    }
    x.select(ndarray::Axis(0), &chosen)
}

/// One k-means run; deterministic for a given seed.
pub fn kmeans(x: ArrayView2<'_, f64>, k: usize, seed: u64) -> Result<KMeans> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(invalid(format!("k = {k} must lie in [1, {n}]")));
    }
    let mut rng = seeded(seed);
    let mut centroids = plus_plus_seeds(x, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    for _ in 0..MAX_ITERS {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for (i, row) in x.outer_iter().enumerate() {
            let (c, d) = nearest(row, &centroids);
            dists[i] = d;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; k];
        for (i, row) in x.outer_iter().enumerate() {
            let mut s = sums.row_mut(assignments[i]);
            s += &row;
            counts[assignments[i]] += 1;
        }
        let mut reseeded = false;
        for c in 0..k {
            if counts[c] > 0 {
                let mean = sums.row(c).mapv(|v| v / counts[c] as f64);
                centroids.row_mut(c).assign(&mean);
            } else {
                let far = (0..n)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("n >= 1");
                centroids.row_mut(c).assign(&x.row(far));
                dists[far] = 0.0;
                reseeded = true;
            }
        }
        if !changed && !reseeded {
            break;
        }
    }
    let inertia = x
        .outer_iter()
        .zip(&assignments)
        .map(|(r, &c)| sq_dist(r, centroids.row(c)))
        .sum();
    Ok(KMeans {
        assignments,
        centroids,
        inertia,
    })
}

/// Lowest-inertia result over `n_init` seeded restarts.
pub fn kmeans_restarts(x: ArrayView2<'_, f64>, k: usize, seed: u64, n_init: usize) -> Result<KMeans> {
    let mut best: Option<KMeans> = None;
    for run in 0..n_init.max(1) {
        let km = kmeans(x, k, crate::rng::derive_seed(seed, run as u64))?;
        if best.as_ref().is_none_or(|b| km.inertia < b.inertia) {
            best = Some(km);
        }
    }
    Ok(best.expect("at least one run"))
}

/// Mean silhouette with Euclidean distances; singleton clusters score 0.
pub fn mean_silhouette(x: ArrayView2<'_, f64>, assignments: &[usize]) -> Result<f64> {
    let n = x.nrows();
    if assignments.len() != n {
        return Err(invalid("one assignment per row is required"));
    }
    let n_clusters = assignments.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; n_clusters];
    for &a in assignments {
        sizes[a] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(invalid("silhouette needs at least two non-empty clusters"));
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; n_clusters];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[assignments[j]] += sq_dist(x.row(i), x.row(j)).sqrt();
            }
        }
        let own = assignments[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..n_clusters)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

#[cfg(test)]
pub(crate) mod tests {
    use ndarray::{array, Array2};
    use rand::Rng;

    use super::*;

    /// Square blobs of half-width 0.5 around each center, sizes as given.
    pub(crate) fn blobs(centers: &[(f64, f64)], sizes: &[usize], seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = seeded(seed);
        let mut v = Vec::new();
        let mut truth = Vec::new();
        for (c, (&(cx, cy), &s)) in centers.iter().zip(sizes).enumerate() {
            for _ in 0..s {
                v.push(cx + rng.random_range(-0.5..0.5));
                v.push(cy + rng.random_range(-0.5..0.5));
                truth.push(c);
            }
        }
        (Array2::from_shape_vec((truth.len(), 2), v).unwrap(), truth)
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let x = array![[0.0, 1.0], [2.0, 3.0], [4.0, 8.0]];
        let km = kmeans(x.view(), 1, 0).unwrap();
        assert_eq!(km.centroids, array![[2.0, 4.0]]);
    }

    #[test]
    fn recovers_two_blobs() {
        let (x, truth) = blobs(&[(0.0, 0.0), (10.0, 10.0)], &[50, 30], 1);
        let km = kmeans(x.view(), 2, 4).unwrap();
        let map = [km.assignments[0], km.assignments[79]];
        assert_ne!(map[0], map[1]);
        assert!(truth.iter().zip(&km.assignments).all(|(&t, &a)| map[t] == a));
    }

    #[test]
    fn k_equal_n_has_zero_inertia() {
        let x = array![[0.0], [1.0], [5.0], [7.5]];
        let km = kmeans(x.view(), 4, 2).unwrap();
        assert_eq!(km.inertia, 0.0);
        let mut a = km.assignments.clone();
        a.sort();
        assert_eq!(a, vec![0, 1, 2, 3]);
    }

    #[test]
    fn rejects_bad_k() {
        let x = array![[0.0], [1.0]];
        assert!(kmeans(x.view(), 0, 0).is_err());
        assert!(kmeans(x.view(), 3, 0).is_err());
    }

    #[test]
    fn silhouette_conventions_and_blobs() {
        let x = array![[0.0], [1.0]];
        assert_eq!(mean_silhouette(x.view(), &[0, 1]).unwrap(), 0.0);
        assert!(mean_silhouette(x.view(), &[0, 0]).is_err());

        let (x, truth) = blobs(&[(0.0, 0.0), (10.0, 0.0)], &[40, 40], 2);
        assert!(mean_silhouette(x.view(), &truth).unwrap() >= 0.8);

        let mut rng = seeded(3);
        let u = Array2::from_shape_fn((300, 2), |_| rng.random_range(0.0..1.0));
        let labels: Vec<usize> = (0..300).map(|_| rng.random_range(0..2)).collect();
        assert!(mean_silhouette(u.view(), &labels).unwrap().abs() <= 0.2);
    }

    #[test]
    fn silhouette_matches_hand_computation() {
        // clusters {0, 1} and {4}; point 0: a = 1, b = 4 -> 0.75
        // point 1: a = 1, b = 3 -> 2/3; point 4 is a singleton -> 0
        let x = array![[0.0], [1.0], [4.0]];
        let s = mean_silhouette(x.view(), &[0, 0, 1]).unwrap();
        assert!((s - (0.75 + 2.0 / 3.0) / 3.0).abs() <= 1e-12);
    }
}
