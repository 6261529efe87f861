//! Kernel mean matching on the eight-point toy problem against a grid-search
//! oracle over the symmetric reduction of the program.

use biquality::density_ratio::{kmm_objective, kmm_weights, rbf_kernel, KmmParams};
use ndarray::Array2;

fn toy() -> (Array2<f64>, Array2<f64>) {
    let u = Array2::from_shape_fn((8, 1), |(i, _)| if i < 4 { -1.0 } else { 1.0 });
    let t = Array2::from_elem((4, 1), 1.0);
    (t, u)
}

fn qp_terms(t: &Array2<f64>, u: &Array2<f64>, gamma: f64) -> (Array2<f64>, Vec<f64>) {
    let n = u.nrows();
    let gram = Array2::from_shape_fn((n, n), |(i, j)| rbf_kernel(u.row(i), u.row(j), gamma));
    let kappa = u
        .outer_iter()
        .map(|x| n as f64 / t.nrows() as f64 * t.outer_iter().map(|y| rbf_kernel(x, y, gamma)).sum::<f64>())
        .collect();
    (gram, kappa)
}

/// Minimum over weights equal within each group: dense grid on the first
/// group's weight, exact 1-D minimization of the convex quadratic in the
/// second (clamped to the feasible interval), then a finer grid around the
/// best cell.
fn grid_oracle(gram: &Array2<f64>, kappa: &[f64], upper: f64, lo: f64, hi: f64) -> f64 {
    let f = |a: f64, b: f64| {
        let beta: Vec<f64> = (0..8).map(|i| if i < 4 { a } else { b }).collect();
        kmm_objective(gram, kappa, &beta)
    };
    let best_b = |a: f64| -> Option<f64> {
        let (b_lo, b_hi) = (((lo - 4.0 * a) / 4.0).max(0.0), ((hi - 4.0 * a) / 4.0).min(upper));
        if b_lo > b_hi {
            return None;
        }
        // f is quadratic in b: sample three points to get its vertex
        let (f0, f1, f2) = (f(a, 0.0), f(a, 1.0), f(a, 2.0));
        let curv = f0 - 2.0 * f1 + f2;
        let slope = f1 - f0 - curv / 2.0;
        let vertex = if curv > 0.0 { -slope / curv } else { b_hi };
        Some(vertex.clamp(b_lo, b_hi))
    };
    let mut best = (f64::INFINITY, 0.0);
    let scan = |lo_a: f64, hi_a: f64, steps: usize, best: &mut (f64, f64)| {
        for s in 0..=steps {
            let a = lo_a + (hi_a - lo_a) * s as f64 / steps as f64;
            if let Some(b) = best_b(a) {
                let v = f(a, b);
                if v < best.0 {
                    *best = (v, a);
                }
            }
        }
    };
    scan(0.0, upper, 20_000, &mut best);
    let step = upper / 20_000.0;
    let centre = best.1;
    scan((centre - step).max(0.0), (centre + step).min(upper), 20_000, &mut best);
    best.0
}

#[test]
fn projected_gradient_matches_grid_oracle() {
    let (t, u) = toy();
    let params = KmmParams {
        gamma: Some(1.0),
        upper_bound: 5.0,
        epsilon: Some(0.01),
        ..KmmParams::default()
    };
    let sol = kmm_weights(t.view(), u.view(), &params, 0).unwrap();
    let beta = sol.weights.values();
    let (gram, kappa) = qp_terms(&t, &u, 1.0);
    let (lo, hi) = (8.0 * 0.99, 8.0 * 1.01);
    let oracle = grid_oracle(&gram, &kappa, 5.0, lo, hi);
    let value = kmm_objective(&gram, &kappa, beta);
    assert!((value - oracle).abs() <= 1e-4, "solver {value} vs oracle {oracle}");
    assert!(beta.iter().all(|&b| (0.0..=5.0).contains(&b)));
    let s: f64 = beta.iter().sum();
    assert!(s >= lo - 1e-6 && s <= hi + 1e-6);
    let neg = beta[..4].iter().sum::<f64>() / 4.0;
    let pos = beta[4..].iter().sum::<f64>() / 4.0;
    assert!(pos >= 3.0 * neg, "+1 mean {pos}, -1 mean {neg}");
}

#[test]
fn identical_samples_keep_unit_weights() {
    let x = Array2::from_shape_fn((12, 2), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.4);
    let sol = kmm_weights(x.view(), x.view(), &KmmParams::default(), 3).unwrap();
    assert!(sol.weights.values().iter().all(|w| (w - 1.0).abs() <= 1e-3));
}

#[test]
fn objective_is_scaled_mmd() {
    // 0.5 b'Kb - kappa'b and the squared MMD differ by a positive factor and a constant
    let (t, u) = toy();
    let (gram, kappa) = qp_terms(&t, &u, 1.0);
    let a = vec![1.0; 8];
    let b: Vec<f64> = (0..8).map(|i| if i < 4 { 0.5 } else { 1.5 }).collect();
    let mmd = |beta: &[f64]| biquality::density_ratio::mmd_squared(t.view(), u.view(), beta, 1.0);
    let lhs = mmd(&a) - mmd(&b);
    let rhs = 2.0 / 64.0 * (kmm_objective(&gram, &kappa, &a) - kmm_objective(&gram, &kappa, &b));
    assert!((lhs - rhs).abs() <= 1e-12);
}
