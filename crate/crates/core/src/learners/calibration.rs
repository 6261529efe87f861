//! One-vs-rest isotonic probability calibration.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;

use super::{check_fit_inputs, fit_isotonic, normalize_or_uniform, Classifier, IsotonicMap, Learner};
use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::rng::seeded;

/// A base classifier followed by a per-class isotonic map and renormalization.
#[derive(Debug, Clone)]
pub struct CalibratedModel<C> {
    base: C,
    /// `None` leaves that class's probability unchanged.
    maps: Vec<Option<IsotonicMap>>,
}

impl<C: Classifier> CalibratedModel<C> {
    pub fn uncalibrated(base: C) -> Self {
        let k = base.n_classes();
        Self {
            base,
            maps: vec![None; k],
        }
    }

    pub fn base(&self) -> &C {
        &self.base
    }

    /// Classes whose probability passes through unchanged because they were
    /// absent from the calibration data.
    pub fn uncalibrated_classes(&self) -> Vec<usize> {
        (0..self.maps.len()).filter(|&k| self.maps[k].is_none()).collect()
    }

    fn fit_maps(base: C, proba: &Array2<f64>, labels: &[usize], weights: &[f64]) -> Result<Self> {
        let k = base.n_classes();
        let mut maps = Vec::with_capacity(k);
        for class in 0..k {
            let present = labels.iter().zip(weights).any(|(&y, &w)| y == class && w > 0.0);
            if !present {
                maps.push(None);
                continue;
            }
            let x: Vec<f64> = proba.column(class).to_vec();
            let y: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l == class))).collect();
            maps.push(Some(fit_isotonic(&x, &y, weights)?.map));
        }
        Ok(Self { base, maps })
    }
}

impl<C: Classifier> Classifier for CalibratedModel<C> {
    fn n_classes(&self) -> usize {
        self.base.n_classes()
    }

    fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut p = self.base.predict_proba(features);
        for mut row in p.outer_iter_mut() {
            for (k, map) in self.maps.iter().enumerate() {
                if let Some(map) = map {
                    row[k] = map.predict(row[k]);
                }
            }
            normalize_or_uniform(row.as_slice_mut().expect("standard layout"));
        }
        p
    }
}

/// Calibrates `base` on a held-out sample with unit weights.
pub fn calibrate<C: Classifier>(base: C, holdout: &Dataset) -> Result<CalibratedModel<C>> {
    if holdout.is_empty() {
        return Err(invalid("calibration holdout is empty"));
    }
    if holdout.n_classes() != base.n_classes() {
        return Err(invalid("holdout class count differs from the model"));
    }
    let proba = base.predict_proba(holdout.features());
    let w = vec![1.0; holdout.n_samples()];
    CalibratedModel::fit_maps(base, &proba, holdout.labels(), &w)
}

/// Wraps a learner so that its fitted model is isotonically calibrated on
/// out-of-fold predictions.
///
/// The returned model's base is refit on all rows; `folds` stratified
/// out-of-fold predictions (weighted like the rows) train the maps. With
/// fewer than `2 * folds` rows the base model is returned uncalibrated.
#[derive(Debug, Clone, Copy)]
pub struct CrossFitCalibrated<L> {
    pub base: L,
    pub folds: usize,
    pub seed: u64,
}

impl<L> CrossFitCalibrated<L> {
    pub fn new(base: L, seed: u64) -> Self {
        Self { base, folds: 3, seed }
    }
}

pub(crate) fn stratified_folds(labels: &[usize], n_classes: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = seeded(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    assignment
}

impl<L: Learner> Learner for CrossFitCalibrated<L> {
    type Model = CalibratedModel<L::Model>;

    fn fit(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[usize],
        n_classes: usize,
        weights: Option<&[f64]>,
    ) -> Result<Self::Model> {
        if self.folds < 2 {
            return Err(invalid("calibration needs at least 2 folds"));
        }
        let w = check_fit_inputs(features, labels, n_classes, weights)?;
        let full = self.base.fit(features, labels, n_classes, Some(&w))?;
        let n = labels.len();
        if n < 2 * self.folds {
            return Ok(CalibratedModel::uncalibrated(full));
        }

        let fold_of = stratified_folds(labels, n_classes, self.folds, self.seed);
        let mut oof = Array2::zeros((n, n_classes));
        for fold in 0..self.folds {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
            let held: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
            let x_train = features.select(ndarray::Axis(0), &train);
            let y_train: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let w_train: Vec<f64> = train.iter().map(|&i| w[i]).collect();
            let model = self.base.fit(x_train.view(), &y_train, n_classes, Some(&w_train))?;
            let p = model.predict_proba(features.select(ndarray::Axis(0), &held).view());
            for (r, &i) in held.iter().enumerate() {
                oof.row_mut(i).assign(&p.row(r));
            }
        }
        CalibratedModel::fit_maps(full, &oof, labels, &w)
    }
}
