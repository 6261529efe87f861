//! Kernel mean matching solved as a box- and sum-constrained quadratic
//! program by projected gradient descent.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::WeightVector;
use crate::error::{invalid, Result};
use crate::rng::seeded;

pub fn rbf_kernel(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// One over the number of features.
pub fn default_gamma(n_features: usize) -> f64 {
    1.0 / n_features.max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KmmParams {
    /// RBF bandwidth; `None` means one over the number of features.
    pub gamma: Option<f64>,
    /// Upper bound `B` on every weight.
    pub upper_bound: f64,
    /// Slack on the mean weight; `None` uses `(sqrt(n) - 1) / sqrt(n)` per batch.
    pub epsilon: Option<f64>,
    pub batch_size: usize,
    pub max_iters: usize,
    /// Relative objective change below which the solver stops.
    pub tolerance: f64,
}

impl Default for KmmParams {
    fn default() -> Self {
        Self {
            gamma: None,
            upper_bound: 1000.0,
            epsilon: None,
            batch_size: 100,
            max_iters: 2000,
            tolerance: 1e-6,
        }
    }
}

impl KmmParams {
    pub fn validate(&self) -> Result<()> {
        if self.gamma.is_some_and(|g| !(g > 0.0 && g.is_finite())) {
            return Err(invalid("gamma must be positive"));
        }
        if !(self.upper_bound > 0.0 && self.upper_bound.is_finite()) {
            return Err(invalid("upper bound B must be positive"));
        }
        if self.epsilon.is_some_and(|e| !(e >= 0.0 && e.is_finite())) {
            return Err(invalid("epsilon must be nonnegative"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be positive"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be positive"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(invalid("tolerance must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmmSolution {
    pub weights: WeightVector,
    /// False when any batch hit `max_iters` first.
    pub converged: bool,
    pub n_batches: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub beta: Vec<f64>,
    /// Objective after each accepted iterate, starting from the initial point.
    pub objective_history: Vec<f64>,
    pub converged: bool,
}

/// `0.5 * b' K b - kappa' b`.
pub fn kmm_objective(gram: &Array2<f64>, kappa: &[f64], beta: &[f64]) -> f64 {
    let b = ArrayView1::from(beta);
    0.5 * b.dot(&gram.dot(&b)) - b.dot(&ArrayView1::from(kappa))
}

/// Squared RKHS distance between the `beta`-weighted untrusted mean embedding
/// and the trusted mean embedding.
pub fn mmd_squared(
    trusted: ArrayView2<'_, f64>,
    untrusted: ArrayView2<'_, f64>,
    beta: &[f64],
    gamma: f64,
) -> f64 {
    let (nt, nu) = (trusted.nrows() as f64, untrusted.nrows() as f64);
    let mut uu = 0.0;
    for (i, a) in untrusted.outer_iter().enumerate() {
        for (j, b) in untrusted.outer_iter().enumerate() {
            uu += beta[i] * beta[j] * rbf_kernel(a, b, gamma);
        }
    }
    let mut ut = 0.0;
    for (i, a) in untrusted.outer_iter().enumerate() {
        for b in trusted.outer_iter() {
            ut += beta[i] * rbf_kernel(a, b, gamma);
        }
    }
    let mut tt = 0.0;
    for a in trusted.outer_iter() {
        for b in trusted.outer_iter() {
            tt += rbf_kernel(a, b, gamma);
        }
    }
    uu / (nu * nu) - 2.0 * ut / (nu * nt) + tt / (nt * nt)
}

/// Euclidean projection of `v` onto `{0 <= b <= upper, lo <= sum(b) <= hi}`.
///
/// The projection is `clip(v - lambda, 0, upper)` for the multiplier found by
/// bisection; when the slab cannot be reached inside the box the nearest
/// corner is returned.
pub fn project_box_slab(v: &[f64], upper: f64, lo: f64, hi: f64) -> Vec<f64> {
    let clip = |lambda: f64| -> Vec<f64> { v.iter().map(|x| (x - lambda).clamp(0.0, upper)).collect() };
    let total = |b: &[f64]| b.iter().sum::<f64>();
    let base = clip(0.0);
    let s = total(&base);
    let target = if s > hi {
        hi
    } else if s < lo {
        lo
    } else {
        return base;
    };
    if target >= upper * v.len() as f64 {
        return vec![upper; v.len()];
    }
    if target <= 0.0 {
        return vec![0.0; v.len()];
    }
    let vmax = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let vmin = v.iter().cloned().fold(f64::INFINITY, f64::min);
    // sum(clip(v - lambda)) is nonincreasing in lambda; bracket the target
    let (mut a, mut b) = (vmin - upper, vmax);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if total(&clip(mid)) > target {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= f64::EPSILON * (1.0 + a.abs().max(b.abs())) {
            break;
        }
    }
    let mut beta = clip(0.5 * (a + b));
    // absorb the residual bisection error into the free coordinates
    let free: Vec<usize> = (0..beta.len()).filter(|&i| beta[i] > 0.0 && beta[i] < upper).collect();
    if !free.is_empty() {
        let shift = (target - total(&beta)) / free.len() as f64;
        for i in free {
            beta[i] = (beta[i] + shift).clamp(0.0, upper);
        }
    }
    beta
}

fn largest_eigenvalue(gram: &Array2<f64>) -> f64 {
    let n = gram.nrows();
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..50 {
        let w = gram.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm <= 0.0 {
            return 0.0;
        }
        lambda = v.dot(&w);
        v = w / norm;
    }
    lambda
}

/// Minimizes `0.5 b' K b - kappa' b` over the box-slab set by projected
/// gradient with step `1/L`, doubling `L` whenever a step would increase the
/// objective. Returns the best iterate.
pub fn solve_box_slab_qp(
    gram: &Array2<f64>,
    kappa: &[f64],
    upper: f64,
    lo: f64,
    hi: f64,
    max_iters: usize,
    tolerance: f64,
) -> QpSolution {
    let n = kappa.len();
    let mut beta = project_box_slab(&vec![1.0; n], upper, lo, hi);
    let mut f = kmm_objective(gram, kappa, &beta);
    let mut history = vec![f];
    let mut lipschitz = largest_eigenvalue(gram).max(1e-12);
    let mut converged = false;
    let mut iters = 0;
    while iters < max_iters {
        iters += 1;
        let grad = gram.dot(&ArrayView1::from(&beta)) - ArrayView1::from(kappa);
        let mut accepted = None;
        for _ in 0..60 {
            let step: Vec<f64> = beta.iter().zip(&grad).map(|(b, g)| b - g / lipschitz).collect();
            let candidate = project_box_slab(&step, upper, lo, hi);
            let fc = kmm_objective(gram, kappa, &candidate);
            if fc <= f {
                accepted = Some((candidate, fc));
                break;
            }
            lipschitz *= 2.0;
        }
        let Some((candidate, fc)) = accepted else {
            converged = true;
            break;
        };
        let change = f - fc;
        beta = candidate;
        f = fc;
        history.push(f);
        if change <= tolerance * f.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    QpSolution {
        beta,
        objective_history: history,
        converged,
    }
}

fn gram_matrix(rows: ArrayView2<'_, f64>, gamma: f64) -> Array2<f64> {
    let n = rows.nrows();
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        k[[i, i]] = 1.0;
        for j in 0..i {
            let v = rbf_kernel(rows.row(i), rows.row(j), gamma);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// KMM weights for the untrusted rows.
///
/// With more untrusted rows than `batch_size`, rows are shuffled with `seed`
/// and each batch is matched against the full trusted sample; the batch
/// solutions are written back to the original row positions.
pub fn kmm_weights(
    trusted: ArrayView2<'_, f64>,
    untrusted: ArrayView2<'_, f64>,
    params: &KmmParams,
    seed: u64,
) -> Result<KmmSolution> {
    params.validate()?;
    if trusted.nrows() == 0 || untrusted.nrows() == 0 {
        return Err(invalid("KMM needs non-empty trusted and untrusted samples"));
    }
    if trusted.ncols() != untrusted.ncols() {
        return Err(invalid("trusted and untrusted feature counts differ"));
    }
    let gamma = params.gamma.unwrap_or_else(|| default_gamma(trusted.ncols()));
    let n_u = untrusted.nrows();
    let mut order: Vec<usize> = (0..n_u).collect();
    if n_u > params.batch_size {
        order.shuffle(&mut seeded(seed));
    }
    let mut weights = vec![0.0; n_u];
    let mut converged = true;
    let mut n_batches = 0;
    for batch in order.chunks(params.batch_size) {
        n_batches += 1;
        let rows = untrusted.select(ndarray::Axis(0), batch);
        let nb = batch.len() as f64;
        let scale = nb / trusted.nrows() as f64;
        let kappa: Vec<f64> = rows
            .outer_iter()
            .map(|x| scale * trusted.outer_iter().map(|t| rbf_kernel(x, t, gamma)).sum::<f64>())
            .collect();
        let gram = gram_matrix(rows.view(), gamma);
        let eps = params.epsilon.unwrap_or((nb.sqrt() - 1.0) / nb.sqrt());
        let qp = solve_box_slab_qp(
            &gram,
            &kappa,
            params.upper_bound,
            nb * (1.0 - eps),
            nb * (1.0 + eps),
            params.max_iters,
            params.tolerance,
        );
        converged &= qp.converged;
        for (&i, b) in batch.iter().zip(qp.beta) {
            weights[i] = b;
        }
    }
    Ok(KmmSolution {
        weights: WeightVector::new(weights)?,
        converged,
        n_batches,
    })
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;

    #[test]
    fn kernel_examples() {
        let a = array![1.0, 2.0];
        assert_eq!(rbf_kernel(a.view(), a.view(), 0.3), 1.0);
        let b = array![1.0, 4.0];
        assert!((rbf_kernel(a.view(), b.view(), 0.25) - (-1.0f64).exp()).abs() <= 1e-15);
        assert_eq!(default_gamma(4), 0.25);
    }

    #[test]
    fn identical_sets_give_unit_weights() {
        let mut rng = crate::rng::seeded(4);
        let x = Array2::from_shape_fn((40, 3), |_| rng.random_range(-1.0..1.0));
        let sol = kmm_weights(x.view(), x.view(), &KmmParams::default(), 0).unwrap();
        assert!(sol.weights.values().iter().all(|w| (w - 1.0).abs() <= 1e-3));
    }

    #[test]
    fn unit_bound_is_respected() {
        let t = array![[0.0], [0.1], [0.2]];
        let u = array![[5.0], [0.0], [0.1], [7.0]];
        let params = KmmParams {
            upper_bound: 1.0,
            ..KmmParams::default()
        };
        let sol = kmm_weights(t.view(), u.view(), &params, 0).unwrap();
        assert!(sol.weights.values().iter().all(|&w| (0.0..=1.0).contains(&w)));
    }

    #[test]
    fn batches_cover_every_row() {
        let mut rng = crate::rng::seeded(8);
        let t = Array2::from_shape_fn((30, 2), |_| rng.random_range(0.0..1.0));
        let u = Array2::from_shape_fn((250, 2), |_| rng.random_range(0.0..2.0));
        let sol = kmm_weights(t.view(), u.view(), &KmmParams::default(), 5).unwrap();
        assert_eq!(sol.n_batches, 3);
        assert_eq!(sol.weights.len(), 250);
        // rows far from the trusted support get smaller weights
        let near: Vec<f64> = (0..250).filter(|&i| u[[i, 0]] < 1.0 && u[[i, 1]] < 1.0).map(|i| sol.weights.values()[i]).collect();
        let far: Vec<f64> = (0..250).filter(|&i| u[[i, 0]] > 1.5 && u[[i, 1]] > 1.5).map(|i| sol.weights.values()[i]).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&near) > mean(&far));
    }

    #[test]
    fn projection_lands_in_the_set() {
        let p = project_box_slab(&[3.0, -1.0, 0.5, 2.0], 1.5, 1.0, 2.0);
        let s: f64 = p.iter().sum();
        assert!((s - 2.0).abs() <= 1e-9);
        assert!(p.iter().all(|&b| (0.0..=1.5).contains(&b)));
        assert_eq!(project_box_slab(&[0.5, 0.7], 1.0, 1.0, 1.5), vec![0.5, 0.7]);
        assert_eq!(project_box_slab(&[9.0, 9.0], 1.0, 3.0, 4.0), vec![1.0, 1.0]);
    }

    /// Projection oracle: the projection is the minimizer of the distance, so
    /// no feasible point drawn at random is closer.
    fn random_feasible(rng: &mut rand_chacha::ChaCha8Rng, n: usize, upper: f64, lo: f64, hi: f64) -> Option<Vec<f64>> {
        for _ in 0..100 {
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=upper)).collect();
            let s: f64 = b.iter().sum();
            if s >= lo && s <= hi {
                return Some(b);
            }
        }
        None
    }

    proptest! {
        #[test]
        fn projection_is_nearest_feasible_point(
            v in prop::collection::vec(-3.0f64..5.0, 2..8),
            upper in 0.5f64..3.0,
            lo_frac in 0.0f64..0.6,
            width in 0.0f64..0.3,
            seed in 0u64..1000,
        ) {
            let n = v.len() as f64;
            let lo = lo_frac * n * upper;
            let hi = lo + width * n * upper;
            let p = project_box_slab(&v, upper, lo, hi);
            let s: f64 = p.iter().sum();
            prop_assert!(p.iter().all(|&b| (0.0..=upper).contains(&b)));
            prop_assert!(s >= lo - 1e-9 && s <= hi + 1e-9);
            let dist = |b: &[f64]| b.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            let mut rng = crate::rng::seeded(seed);
            for _ in 0..20 {
                if let Some(q) = random_feasible(&mut rng, v.len(), upper, lo, hi) {
                    prop_assert!(dist(&p) <= dist(&q) + 1e-9);
                }
            }
        }

        #[test]
        fn solver_objective_never_increases(
            pts in prop::collection::vec(-2.0f64..2.0, 3..12),
            seed in 0u64..100,
        ) {
            let u = Array2::from_shape_vec((pts.len(), 1), pts.clone()).unwrap();
            let t = Array2::from_shape_fn((5, 1), |(i, _)| i as f64 * 0.3 + (seed % 3) as f64 * 0.1);
            let gram = gram_matrix(u.view(), 1.0);
            let n = pts.len() as f64;
            let kappa: Vec<f64> = u.outer_iter()
                .map(|x| n / 5.0 * t.outer_iter().map(|y| rbf_kernel(x, y, 1.0)).sum::<f64>())
                .collect();
            let eps = (n.sqrt() - 1.0) / n.sqrt();
            let qp = solve_box_slab_qp(&gram, &kappa, 4.0, n * (1.0 - eps), n * (1.0 + eps), 2000, 1e-6);
            for w in qp.objective_history.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
            let s: f64 = qp.beta.iter().sum();
            prop_assert!(qp.beta.iter().all(|&b| (0.0..=4.0).contains(&b)));
            prop_assert!(s >= n * (1.0 - eps) - 1e-6 && s <= n * (1.0 + eps) + 1e-6);
        }

        #[test]
        fn single_batch_is_permutation_equivariant(
            pts in prop::collection::vec(-2.0f64..2.0, 3..10),
            shift in 1usize..9,
        ) {
            let n = pts.len();
            let t = array![[0.0], [0.5], [1.0]];
            let u = Array2::from_shape_vec((n, 1), pts.clone()).unwrap();
            let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let up = u.select(ndarray::Axis(0), &perm);
            let params = KmmParams { gamma: Some(1.0), ..KmmParams::default() };
            let a = kmm_weights(t.view(), u.view(), &params, 1).unwrap();
            let b = kmm_weights(t.view(), up.view(), &params, 1).unwrap();
            for (i, &p) in perm.iter().enumerate() {
                prop_assert!((b.weights.values()[i] - a.weights.values()[p]).abs() <= 1e-4);
            }
        }
    }
}
