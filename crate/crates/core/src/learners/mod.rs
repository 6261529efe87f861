//! Probabilistic classifiers used by every reweighting algorithm.

pub mod calibration;
pub mod gbt;
pub mod isotonic;
pub mod tree;

use ndarray::{Array2, ArrayView2};

use crate::data::Dataset;
use crate::error::{invalid, Result};

pub use calibration::{calibrate, CalibratedModel, CrossFitCalibrated};
pub use gbt::{GbtLearner, GbtModel, GbtParams};
pub use isotonic::{fit_isotonic, IsotonicMap};
pub use tree::{DecisionTree, TreeLearner, TreeParams};

/// Lower clipping bound applied to predicted probabilities before they appear
/// in a ratio; the upper bound is `1 - PROBA_CLIP`.
pub const PROBA_CLIP: f64 = 1e-6;

pub fn clip_probability(p: f64) -> f64 {
    p.clamp(PROBA_CLIP, 1.0 - PROBA_CLIP)
}

/// A fitted model producing one probability vector of length `K` per row.
pub trait Classifier: Send + Sync {
    fn n_classes(&self) -> usize;

    fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Array2<f64>;

    /// Arg-max class per row; ties resolve to the lowest class id.
    fn predict(&self, features: ArrayView2<'_, f64>) -> Vec<usize> {
        self.predict_proba(features)
            .outer_iter()
            .map(|row| {
                let mut best = 0;
                for (k, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

impl<C: Classifier + ?Sized> Classifier for Box<C> {
    fn n_classes(&self) -> usize {
        (**self).n_classes()
    }

    fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Array2<f64> {
        (**self).predict_proba(features)
    }
}

impl<C: Classifier + ?Sized> Classifier for &C {
    fn n_classes(&self) -> usize {
        (**self).n_classes()
    }

    fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Array2<f64> {
        (**self).predict_proba(features)
    }
}

/// A training procedure for [`Classifier`]s. Fitting must be deterministic.
pub trait Learner: Send + Sync {
    type Model: Classifier + 'static;

    /// `weights`, when given, are nonnegative and aligned to the rows.
    /// `None` behaves exactly like all-ones weights.
    fn fit(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[usize],
        n_classes: usize,
        weights: Option<&[f64]>,
    ) -> Result<Self::Model>;

    fn fit_dataset(&self, d: &Dataset, weights: Option<&[f64]>) -> Result<Self::Model> {
        self.fit(d.features(), d.labels(), d.n_classes(), weights)
    }
}

impl<L: Learner> Learner for &L {
    type Model = L::Model;

    fn fit(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[usize],
        n_classes: usize,
        weights: Option<&[f64]>,
    ) -> Result<Self::Model> {
        (**self).fit(features, labels, n_classes, weights)
    }
}

/// Validates a fit call and materializes the weights.
pub(crate) fn check_fit_inputs(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    n_classes: usize,
    weights: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if n_classes < 2 {
        return Err(invalid("need at least 2 classes"));
    }
    if features.nrows() != labels.len() {
        return Err(invalid(format!(
            "{} rows but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(invalid("cannot fit on an empty dataset"));
    }
    if labels.iter().any(|&y| y >= n_classes) {
        return Err(invalid("label outside [0, K)"));
    }
    match weights {
        None => Ok(vec![1.0; labels.len()]),
        Some(w) => {
            if w.len() != labels.len() {
                return Err(invalid(format!("{} weights for {} rows", w.len(), labels.len())));
            }
            if w.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
                return Err(invalid("weights must be finite and nonnegative"));
            }
            Ok(w.to_vec())
        }
    }
}

/// Weighted class frequencies, falling back to uniform when all weight is zero.
pub(crate) fn class_distribution(labels: &[usize], weights: &[f64], n_classes: usize) -> Vec<f64> {
    let mut mass = vec![0.0; n_classes];
    for (&y, &w) in labels.iter().zip(weights) {
        mass[y] += w;
    }
    normalize_or_uniform(&mut mass);
    mass
}

pub(crate) fn normalize_or_uniform(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 && total.is_finite() {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
    }
}
