//! Weighted isotonic regression by pool-adjacent-violators.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Nondecreasing, right-continuous step function.
///
/// `values[b]` applies on `[breakpoints[b], breakpoints[b + 1])`; inputs below
/// the first breakpoint clamp to `values[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicMap {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl IsotonicMap {
    pub fn constant(value: f64) -> Self {
        Self {
            breakpoints: vec![f64::NEG_INFINITY],
            values: vec![value],
        }
    }

    pub fn predict(&self, x: f64) -> f64 {
        let b = self.breakpoints.partition_point(|&bp| bp <= x);
        self.values[b.saturating_sub(1)]
    }
}

/// A fitted isotonic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicFit {
    pub map: IsotonicMap,
    /// Fitted value of every input point, in input order.
    pub fitted: Vec<f64>,
}

struct Block {
    x_first: f64,
    sum_wy: f64,
    sum_w: f64,
}

impl Block {
    fn mean(&self) -> f64 {
        self.sum_wy / self.sum_w
    }
}

/// Weighted least-squares nondecreasing fit of `y` against `x`.
///
/// Points sharing an `x` are pooled first; zero-weight points do not influence
/// the fit and receive the map's value at their `x`.
pub fn fit_isotonic(x: &[f64], y: &[f64], w: &[f64]) -> Result<IsotonicFit> {
    if x.is_empty() {
        return Err(invalid("isotonic regression needs at least one point"));
    }
    if x.len() != y.len() || x.len() != w.len() {
        return Err(invalid("x, y and w must have equal lengths"));
    }
    if w.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
        return Err(invalid("isotonic weights must be finite and nonnegative"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(invalid("isotonic inputs must be finite"));
    }

    let mut order: Vec<usize> = (0..x.len()).filter(|&i| w[i] > 0.0).collect();
    if order.is_empty() {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        return Ok(IsotonicFit {
            map: IsotonicMap::constant(mean),
            fitted: vec![mean; x.len()],
        });
    }
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));

    let mut stack: Vec<Block> = Vec::with_capacity(order.len());
    for &i in &order {
        match stack.last_mut() {
            Some(top) if top.x_first == x[i] => {
                top.sum_wy += w[i] * y[i];
                top.sum_w += w[i];
            }
            _ => stack.push(Block {
                x_first: x[i],
                sum_wy: w[i] * y[i],
                sum_w: w[i],
            }),
        }
        while stack.len() >= 2 && stack[stack.len() - 2].mean() > stack[stack.len() - 1].mean() {
            let top = stack.pop().expect("len >= 2");
            let below = stack.last_mut().expect("len >= 1");
            below.sum_wy += top.sum_wy;
            below.sum_w += top.sum_w;
        }
    }

    let map = IsotonicMap {
        breakpoints: stack.iter().map(|b| b.x_first).collect(),
        values: stack.iter().map(Block::mean).collect(),
    };
    let fitted = x.iter().map(|&xi| map.predict(xi)).collect();
    Ok(IsotonicFit { map, fitted })
}
