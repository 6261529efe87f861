//! Importance reweighting of untrusted samples: IRBL, IRBL2, PDR, K-DR
//! (with its K-PDR and K-KMM instances) and the two baselines.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{BiqualityDataset, Dataset};
use crate::density_ratio::{kmm_weights, pdr_ratio, KmmParams, SourceLabeledSet, WeightVector};
use crate::error::{invalid, Result};
use crate::learners::{clip_probability, Classifier, CrossFitCalibrated, Learner};
use crate::rng::derive_seed;

/// Untrusted weights are capped here after every formula.
pub const MAX_WEIGHT: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name")]
pub enum ReweightingMethod {
    #[serde(rename = "IRBL")]
    Irbl,
    #[serde(rename = "IRBL2")]
    Irbl2,
    #[serde(rename = "PDR")]
    Pdr,
    #[serde(rename = "K-PDR")]
    KPdr,
    #[serde(rename = "K-KMM")]
    KKmm(KmmParams),
    #[serde(rename = "NoCorrection")]
    NoCorrection,
    #[serde(rename = "TrustedOnly")]
    TrustedOnly,
}

impl ReweightingMethod {
    pub const NAMES: [&'static str; 7] =
        ["IRBL", "IRBL2", "PDR", "K-PDR", "K-KMM", "NoCorrection", "TrustedOnly"];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Irbl => "IRBL",
            Self::Irbl2 => "IRBL2",
            Self::Pdr => "PDR",
            Self::KPdr => "K-PDR",
            Self::KKmm(_) => "K-KMM",
            Self::NoCorrection => "NoCorrection",
            Self::TrustedOnly => "TrustedOnly",
        }
    }

    /// Every method with default parameters.
    pub fn all() -> Vec<Self> {
        vec![
            Self::Irbl,
            Self::Irbl2,
            Self::Pdr,
            Self::KPdr,
            Self::KKmm(KmmParams::default()),
            Self::NoCorrection,
            Self::TrustedOnly,
        ]
    }
}

impl fmt::Display for ReweightingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReweightingMethod {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Ok(match key.as_str() {
            "irbl" => Self::Irbl,
            "irbl2" => Self::Irbl2,
            "pdr" => Self::Pdr,
            "kpdr" => Self::KPdr,
            "kkmm" => Self::KKmm(KmmParams::default()),
            "nocorrection" => Self::NoCorrection,
            "trustedonly" => Self::TrustedOnly,
            _ => {
                return Err(invalid(format!(
                    "unknown method `{s}`; expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightFlag {
    /// A class seen in untrusted data has no trusted rows.
    MissingTrustedClass { class: usize },
    /// Some weights exceeded [`MAX_WEIGHT`] and were capped.
    Capped { count: usize },
    /// A KMM batch stopped at its iteration limit.
    KmmNotConverged { class: usize },
}

impl fmt::Display for WeightFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MissingTrustedClass { class } => write!(f, "missing_trusted_class_{class}"),
            Self::Capped { count } => write!(f, "capped_{count}"),
            Self::KmmNotConverged { class } => write!(f, "kmm_not_converged_{class}"),
        }
    }
}

/// Weights for the untrusted rows plus any diagnostics raised on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightOutcome {
    pub weights: WeightVector,
    pub flags: Vec<WeightFlag>,
}

fn finalize(raw: Vec<f64>, mut flags: Vec<WeightFlag>) -> Result<WeightOutcome> {
    let mut capped = 0;
    let values = raw
        .into_iter()
        .map(|w| {
            if w > MAX_WEIGHT || w.is_nan() {
                capped += 1;
                MAX_WEIGHT
            } else {
                w.max(0.0)
            }
        })
        .collect();
    if capped > 0 {
        flags.push(WeightFlag::Capped { count: capped });
    }
    Ok(WeightOutcome {
        weights: WeightVector::new(values)?,
        flags,
    })
}

fn missing_trusted_classes(trusted_counts: &[usize], untrusted_labels: &[usize]) -> Vec<WeightFlag> {
    let mut seen = vec![false; trusted_counts.len()];
    for &y in untrusted_labels {
        seen[y] = true;
    }
    (0..trusted_counts.len())
        .filter(|&k| seen[k] && trusted_counts[k] == 0)
        .map(|class| WeightFlag::MissingTrustedClass { class })
        .collect()
}

fn class_counts(labels: &[usize], n_classes: usize) -> Vec<usize> {
    let mut c = vec![0; n_classes];
    for &y in labels {
        c[y] += 1;
    }
    c
}

/// IRBL weights `f_T(x)_y / f_U(x)_y` from fitted models.
pub fn irbl_weights_from_models(
    f_trusted: &dyn Classifier,
    f_untrusted: &dyn Classifier,
    untrusted: ArrayView2<'_, f64>,
    untrusted_labels: &[usize],
    trusted_counts: &[usize],
) -> Result<WeightOutcome> {
    let pt = f_trusted.predict_proba(untrusted);
    let pu = f_untrusted.predict_proba(untrusted);
    let raw = untrusted_labels
        .iter()
        .enumerate()
        .map(|(i, &y)| clip_probability(pt[[i, y]]) / clip_probability(pu[[i, y]]))
        .collect();
    finalize(raw, missing_trusted_classes(trusted_counts, untrusted_labels))
}

/// IRBL2 weights `f_T(x)_y / f_U(x)_y * f_S(x)_1 / f_S(x)_0 * |U| / |T|`.
pub fn irbl2_weights_from_models(
    f_trusted: &dyn Classifier,
    f_untrusted: &dyn Classifier,
    f_source: &dyn Classifier,
    untrusted: ArrayView2<'_, f64>,
    untrusted_labels: &[usize],
    trusted_counts: &[usize],
) -> Result<WeightOutcome> {
    let pt = f_trusted.predict_proba(untrusted);
    let pu = f_untrusted.predict_proba(untrusted);
    let ps = f_source.predict_proba(untrusted);
    let n_t: usize = trusted_counts.iter().sum();
    let n_u = untrusted_labels.len();
    let raw = untrusted_labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            clip_probability(pt[[i, y]]) / clip_probability(pu[[i, y]])
                * clip_probability(ps[[i, 1]])
                / clip_probability(ps[[i, 0]])
                * n_u as f64
                / n_t as f64
        })
        .collect();
    finalize(raw, missing_trusted_classes(trusted_counts, untrusted_labels))
}

/// K-DR weights `e^y(x) * (|T^y| / |T|) * (|U| / |U^y|)` from per-row
/// class-conditional ratios; classes absent from the trusted data get 0.
pub fn kdr_weights_from_ratios(
    ratios: &[f64],
    untrusted_labels: &[usize],
    trusted_counts: &[usize],
) -> Result<WeightOutcome> {
    if ratios.len() != untrusted_labels.len() {
        return Err(invalid("one ratio per untrusted row is required"));
    }
    let n_classes = trusted_counts.len();
    let untrusted_counts = class_counts(untrusted_labels, n_classes);
    let n_t: usize = trusted_counts.iter().sum();
    let n_u = untrusted_labels.len();
    let raw = untrusted_labels
        .iter()
        .zip(ratios)
        .map(|(&y, &e)| {
            if trusted_counts[y] == 0 {
                0.0
            } else {
                e * (trusted_counts[y] as f64 / n_t as f64) * (n_u as f64 / untrusted_counts[y] as f64)
            }
        })
        .collect();
    finalize(raw, missing_trusted_classes(trusted_counts, untrusted_labels))
}

/// K-PDR weights `f_S^y(x)_1 / f_S^y(x)_0 * |U| / |T|` from per-class
/// source classifiers; `None` marks a class without trusted rows.
pub fn kpdr_weights_from_models(
    per_class_source: &[Option<&dyn Classifier>],
    untrusted: ArrayView2<'_, f64>,
    untrusted_labels: &[usize],
    trusted_counts: &[usize],
) -> Result<WeightOutcome> {
    let n_t: usize = trusted_counts.iter().sum();
    let n_u = untrusted_labels.len();
    let mut raw = vec![0.0; n_u];
    for (k, model) in per_class_source.iter().enumerate() {
        let rows: Vec<usize> = (0..n_u).filter(|&i| untrusted_labels[i] == k).collect();
        let Some(model) = model.filter(|_| trusted_counts[k] > 0) else {
            continue;
        };
        if rows.is_empty() {
            continue;
        }
        let p = model.predict_proba(untrusted.select(ndarray::Axis(0), &rows).view());
        for (r, &i) in rows.iter().enumerate() {
            raw[i] = clip_probability(p[[r, 1]]) / clip_probability(p[[r, 0]]) * n_u as f64 / n_t as f64;
        }
    }
    finalize(raw, missing_trusted_classes(trusted_counts, untrusted_labels))
}

/// Estimates the ratio of trusted to untrusted densities on the untrusted
/// rows of a single class.
pub trait DensityRatioEstimator: Sync {
    fn estimate(
        &self,
        class: usize,
        trusted: ArrayView2<'_, f64>,
        untrusted: ArrayView2<'_, f64>,
    ) -> Result<(Vec<f64>, Vec<WeightFlag>)>;
}

/// Source-classifier ratio `P(S=1|x) / P(S=0|x) * |U^k| / |T^k|`.
pub struct ProbabilisticRatio<'a, L> {
    pub learner: &'a L,
    pub options: TrainOptions,
}

impl<L: Learner> DensityRatioEstimator for ProbabilisticRatio<'_, L> {
    fn estimate(
        &self,
        class: usize,
        trusted: ArrayView2<'_, f64>,
        untrusted: ArrayView2<'_, f64>,
    ) -> Result<(Vec<f64>, Vec<WeightFlag>)> {
        let set = SourceLabeledSet::new(trusted, untrusted)?;
        let seed = derive_seed(self.options.seed, 100 + class as u64);
        let model = fit_calibrated(self.learner, &self.options, set.features(), set.source(), 2, seed)?;
        let p = model.predict_proba(set.untrusted_features());
        let ratios = p
            .column(1)
            .iter()
            .map(|&q| pdr_ratio(q, set.n_trusted(), set.n_untrusted()))
            .collect();
        Ok((ratios, Vec::new()))
    }
}

pub struct KmmRatio {
    pub params: KmmParams,
    pub seed: u64,
}

impl DensityRatioEstimator for KmmRatio {
    fn estimate(
        &self,
        class: usize,
        trusted: ArrayView2<'_, f64>,
        untrusted: ArrayView2<'_, f64>,
    ) -> Result<(Vec<f64>, Vec<WeightFlag>)> {
        let sol = kmm_weights(trusted, untrusted, &self.params, derive_seed(self.seed, 200 + class as u64))?;
        let flags = if sol.converged {
            Vec::new()
        } else {
            vec![WeightFlag::KmmNotConverged { class }]
        };
        Ok((sol.weights.into_inner(), flags))
    }
}

/// Generic K-DR: one class-conditional ratio estimate per class.
pub fn kdr_weights(biq: &BiqualityDataset, estimator: &dyn DensityRatioEstimator) -> Result<WeightOutcome> {
    let k = biq.n_classes();
    let trusted_counts = biq.trusted.class_counts();
    let labels = biq.untrusted.labels();
    let mut ratios = vec![0.0; labels.len()];
    let mut flags = Vec::new();
    for class in 0..k {
        let t_rows = biq.trusted.class_indices(class);
        let u_rows = biq.untrusted.class_indices(class);
        if t_rows.is_empty() || u_rows.is_empty() {
            continue;
        }
        let t = biq.trusted.features().select(ndarray::Axis(0), &t_rows);
        let u = biq.untrusted.features().select(ndarray::Axis(0), &u_rows);
        let (e, f) = estimator.estimate(class, t.view(), u.view())?;
        flags.extend(f);
        for (&i, v) in u_rows.iter().zip(e) {
            ratios[i] = v;
        }
    }
    let mut out = kdr_weights_from_ratios(&ratios, labels, &trusted_counts)?;
    flags.append(&mut out.flags);
    out.flags = flags;
    Ok(out)
}

/// Options shared by every learned weighting step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainOptions {
    /// Cross-fitting folds for isotonic calibration of the auxiliary
    /// classifiers; values below 2 disable calibration.
    pub calibration_folds: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            calibration_folds: 3,
            seed: 0,
        }
    }
}

fn fit_calibrated<L: Learner>(
    learner: &L,
    options: &TrainOptions,
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    n_classes: usize,
    seed: u64,
) -> Result<Box<dyn Classifier>> {
    if options.calibration_folds < 2 {
        return Ok(Box::new(learner.fit(features, labels, n_classes, None)?));
    }
    let wrapped = CrossFitCalibrated {
        base: learner,
        folds: options.calibration_folds,
        seed,
    };
    Ok(Box::new(wrapped.fit(features, labels, n_classes, None)?))
}

fn fit_on<L: Learner>(learner: &L, options: &TrainOptions, d: &Dataset, tag: u64) -> Result<Box<dyn Classifier>> {
    fit_calibrated(learner, options, d.features(), d.labels(), d.n_classes(), derive_seed(options.seed, tag))
}

pub fn irbl_weights<L: Learner>(biq: &BiqualityDataset, learner: &L, options: &TrainOptions) -> Result<WeightOutcome> {
    let f_t = fit_on(learner, options, &biq.trusted, 1)?;
    let f_u = fit_on(learner, options, &biq.untrusted, 2)?;
    irbl_weights_from_models(
        f_t.as_ref(),
        f_u.as_ref(),
        biq.untrusted.features(),
        biq.untrusted.labels(),
        &biq.trusted.class_counts(),
    )
}

pub fn irbl2_weights<L: Learner>(biq: &BiqualityDataset, learner: &L, options: &TrainOptions) -> Result<WeightOutcome> {
    let f_t = fit_on(learner, options, &biq.trusted, 1)?;
    let f_u = fit_on(learner, options, &biq.untrusted, 2)?;
    let set = SourceLabeledSet::from_biquality(biq)?;
    let f_s = fit_calibrated(learner, options, set.features(), set.source(), 2, derive_seed(options.seed, 3))?;
    irbl2_weights_from_models(
        f_t.as_ref(),
        f_u.as_ref(),
        f_s.as_ref(),
        biq.untrusted.features(),
        biq.untrusted.labels(),
        &biq.trusted.class_counts(),
    )
}

pub fn pdr_weights<L: Learner>(biq: &BiqualityDataset, learner: &L, options: &TrainOptions) -> Result<WeightOutcome> {
    let set = SourceLabeledSet::from_biquality(biq)?;
    let f_s = fit_calibrated(learner, options, set.features(), set.source(), 2, derive_seed(options.seed, 3))?;
    let w = crate::density_ratio::pdr_weights_from_model(
        f_s.as_ref(),
        set.untrusted_features(),
        set.n_trusted(),
        set.n_untrusted(),
    )?;
    finalize(w.into_inner(), Vec::new())
}

pub fn kpdr_weights<L: Learner>(biq: &BiqualityDataset, learner: &L, options: &TrainOptions) -> Result<WeightOutcome> {
    let k = biq.n_classes();
    let trusted_counts = biq.trusted.class_counts();
    let mut models: Vec<Option<Box<dyn Classifier>>> = Vec::with_capacity(k);
    for class in 0..k {
        let t_rows = biq.trusted.class_indices(class);
        let u_rows = biq.untrusted.class_indices(class);
        if t_rows.is_empty() || u_rows.is_empty() {
            models.push(None);
            continue;
        }
        let t = biq.trusted.features().select(ndarray::Axis(0), &t_rows);
        let u = biq.untrusted.features().select(ndarray::Axis(0), &u_rows);
        let set = SourceLabeledSet::new(t.view(), u.view())?;
        let seed = derive_seed(options.seed, 100 + class as u64);
        models.push(Some(fit_calibrated(learner, options, set.features(), set.source(), 2, seed)?));
    }
    let refs: Vec<Option<&dyn Classifier>> = models.iter().map(|m| m.as_deref()).collect();
    kpdr_weights_from_models(&refs, biq.untrusted.features(), biq.untrusted.labels(), &trusted_counts)
}

pub fn kkmm_weights(biq: &BiqualityDataset, params: &KmmParams, seed: u64) -> Result<WeightOutcome> {
    kdr_weights(biq, &KmmRatio { params: *params, seed })
}

/// Untrusted-row weights of any method. The baselines report unit weights
/// (NoCorrection) or zero weights (TrustedOnly).
pub fn compute_weights<L: Learner>(
    biq: &BiqualityDataset,
    method: &ReweightingMethod,
    learner: &L,
    options: &TrainOptions,
) -> Result<WeightOutcome> {
    match method {
        ReweightingMethod::Irbl => irbl_weights(biq, learner, options),
        ReweightingMethod::Irbl2 => irbl2_weights(biq, learner, options),
        ReweightingMethod::Pdr => pdr_weights(biq, learner, options),
        ReweightingMethod::KPdr => kpdr_weights(biq, learner, options),
        ReweightingMethod::KKmm(params) => kkmm_weights(biq, params, options.seed),
        ReweightingMethod::NoCorrection => Ok(WeightOutcome {
            weights: WeightVector::ones(biq.n_untrusted()),
            flags: Vec::new(),
        }),
        ReweightingMethod::TrustedOnly => Ok(WeightOutcome {
            weights: WeightVector::new(vec![0.0; biq.n_untrusted()])?,
            flags: Vec::new(),
        }),
    }
}

/// Trusted and untrusted rows pooled (trusted first) with one weight per row.
#[derive(Debug, Clone)]
pub struct ReweightedTrainingSet {
    pub pooled: Dataset,
    pub weights: WeightVector,
    /// `true` for trusted rows.
    pub source: Vec<bool>,
}

impl ReweightedTrainingSet {
    pub fn new(biq: &BiqualityDataset, untrusted_weights: &WeightVector) -> Result<Self> {
        if untrusted_weights.len() != biq.n_untrusted() {
            return Err(invalid("one weight per untrusted row is required"));
        }
        let mut w = vec![1.0; biq.n_trusted()];
        w.extend_from_slice(untrusted_weights.values());
        Ok(Self {
            pooled: biq.pooled(),
            weights: WeightVector::new(w)?,
            source: biq.source_flags(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel<M> {
    pub model: M,
    /// Untrusted weights used for the final fit; `None` for the baselines.
    pub weights: Option<WeightOutcome>,
}

/// Fits the final classifier for `method`.
pub fn train_with_method<L: Learner>(
    biq: &BiqualityDataset,
    method: &ReweightingMethod,
    learner: &L,
    options: &TrainOptions,
) -> Result<TrainedModel<L::Model>> {
    match method {
        ReweightingMethod::TrustedOnly => Ok(TrainedModel {
            model: learner.fit_dataset(&biq.trusted, None)?,
            weights: None,
        }),
        ReweightingMethod::NoCorrection => Ok(TrainedModel {
            model: learner.fit_dataset(&biq.pooled(), None)?,
            weights: None,
        }),
        _ => {
            let outcome = compute_weights(biq, method, learner, options)?;
            let set = ReweightedTrainingSet::new(biq, &outcome.weights)?;
            Ok(TrainedModel {
                model: learner.fit_dataset(&set.pooled, Some(set.weights.values()))?,
                weights: Some(outcome),
            })
        }
    }
}

/// A lookup-table classifier over a discrete feature: row `x` of `table`
/// (indexed by the rounded first feature) is the probability vector.
#[derive(Debug, Clone)]
pub struct TableClassifier {
    pub table: Array2<f64>,
}

impl Classifier for TableClassifier {
    fn n_classes(&self) -> usize {
        self.table.ncols()
    }

    fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Array2<f64> {
        let rows: Vec<usize> = features.column(0).iter().map(|&x| x.round() as usize).collect();
        self.table.select(ndarray::Axis(0), &rows)
    }
}
