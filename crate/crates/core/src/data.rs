//! Tabular datasets, CSV ingestion, stratified splitting and toy data.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evalstat::{cohens_kappa, ConfusionMatrix};
use crate::learners::{Classifier, Learner};
use crate::rng::{derive_seed, seeded};

/// Labeled tabular data: a dense feature matrix plus integer class ids in `[0, K)`.
///
/// `K` is part of the schema, so a subset keeps the class count of its parent
/// even when some classes no longer occur in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    feature_names: Vec<String>,
    class_names: Vec<String>,
    label_column: String,
}

/// JSON sidecar describing how a CSV was ingested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub label_column: String,
    /// Original label text for each class id, in first-appearance order.
    pub label_mapping: Vec<String>,
    pub n_classes: usize,
    pub n_samples: usize,
    pub n_features: usize,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n_classes = class_names.len();
        if n_classes < 2 {
            return Err(Error::DegenerateDataset(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        if features.nrows() != labels.len() {
            return Err(Error::Schema(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::Schema(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.ncols()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::Schema(format!("label {bad} outside [0, {n_classes})")));
        }
        if let Some(((row, col), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Parse {
                row: row + 1,
                column: feature_names[col].clone(),
                message: "non-finite value".into(),
            });
        }
        Ok(Self {
            features,
            labels,
            feature_names,
            class_names,
            label_column: "label".into(),
        })
    }

    /// Builds a dataset with generated names (`x0, x1, ...` and `"0", "1", ...`).
    pub fn from_parts(features: Array2<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let feature_names = (0..features.ncols()).map(|j| format!("x{j}")).collect();
        let class_names = (0..n_classes).map(|k| k.to_string()).collect();
        Self::new(features, labels, feature_names, class_names)
    }

    pub fn with_label_column(mut self, name: impl Into<String>) -> Self {
        self.label_column = name.into();
        self
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn label_column(&self) -> &str {
        &self.label_column
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Row indices belonging to class `k`, ascending.
    pub fn class_indices(&self, k: usize) -> Vec<usize> {
        (0..self.n_samples()).filter(|&i| self.labels[i] == k).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            label_column: self.label_column.clone(),
        }
    }

    /// Same rows with replaced labels.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Dataset> {
        if labels.len() != self.n_samples() {
            return Err(Error::Schema(format!(
                "{} labels for {} rows",
                labels.len(),
                self.n_samples()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.n_classes()) {
            return Err(Error::Schema(format!("label {bad} outside [0, {})", self.n_classes())));
        }
        Ok(Dataset {
            labels,
            ..self.clone()
        })
    }

    /// Stacks `other` below `self`. Both must share one schema.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        self.check_same_schema(other)?;
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), other.features.view()])
            .expect("column counts checked");
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Dataset {
            features,
            labels,
            ..self.clone()
        })
    }

    pub fn check_same_schema(&self, other: &Dataset) -> Result<()> {
        if self.n_classes() != other.n_classes() {
            return Err(Error::Schema(format!(
                "class count mismatch: {} vs {}",
                self.n_classes(),
                other.n_classes()
            )));
        }
        if self.feature_names != other.feature_names {
            return Err(Error::Schema("feature schemas differ".into()));
        }
        Ok(())
    }

    pub fn metadata(&self) -> DatasetMeta {
        DatasetMeta {
            label_column: self.label_column.clone(),
            label_mapping: self.class_names.clone(),
            n_classes: self.n_classes(),
            n_samples: self.n_samples(),
            n_features: self.n_features(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Writes the dataset in the same CSV dialect [`read_csv`] accepts.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.feature_names.clone();
        header.push(self.label_column.clone());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for (row, &y) in self.features.outer_iter().zip(&self.labels) {
            record.clear();
            record.extend(row.iter().map(|v| v.to_string()));
            record.push(self.class_names[y].clone());
            w.write_record(&record)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: "<csv writer>".into(),
            source,
        })?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        self.write_csv(file)
    }
}

/// Loads a numeric CSV. Labels are re-encoded to `[0, K)` by first appearance.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    read_csv(file, label_column)
}

/// Reads a numeric CSV from any reader (see [`load_csv`]).
pub fn read_csv<R: Read>(reader: R, label_column: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Schema(format!("label column `{label_column}` not found")))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut class_ids: HashMap<String, usize> = HashMap::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                let text = cell.trim().to_string();
                let next = class_names.len();
                let id = *class_ids.entry(text.clone()).or_insert_with(|| {
                    class_names.push(text);
                    next
                });
                labels.push(id);
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row,
                column: header[j].clone(),
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: header[j].clone(),
                    message: format!("`{cell}` is not finite"),
                });
            }
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::DegenerateDataset("no data rows".into()));
    }
    if class_names.len() < 2 {
        return Err(Error::DegenerateDataset(format!(
            "label column `{label_column}` has a single class"
        )));
    }
    let features = Array2::from_shape_vec((labels.len(), feature_names.len()), values)
        .expect("row lengths checked");
    Ok(Dataset::new(features, labels, feature_names, class_names)?.with_label_column(label_column))
}

/// Splits row indices per class so that the first part receives
/// `round(fraction * class_count)` rows of every class (adjusted by at most one
/// so that neither part is empty). Both parts are returned in ascending order.
pub fn stratified_split_indices(
    labels: &[usize],
    n_classes: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(invalid(format!("split fraction {fraction} outside (0, 1)")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    if let Some((class, members)) = by_class.iter().enumerate().find(|(_, m)| m.len() == 1) {
        return Err(Error::Stratification {
            class,
            count: members.len(),
        });
    }
    let mut take: Vec<usize> = by_class
        .iter()
        .map(|m| (fraction * m.len() as f64).round() as usize)
        .collect();
    let total: usize = take.iter().sum();
    let largest = (0..n_classes).max_by_key(|&k| (by_class[k].len(), std::cmp::Reverse(k)));
    if let Some(k) = largest {
        if total == 0 && !labels.is_empty() {
            take[k] += 1;
        } else if total == labels.len() && total > 0 {
            take[k] -= 1;
        }
    }

    let mut rng = seeded(seed);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (members, &t) in by_class.iter_mut().zip(&take) {
        members.shuffle(&mut rng);
        first.extend_from_slice(&members[..t]);
        second.extend_from_slice(&members[t..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((first, second))
}

/// Stratified split of a dataset; the first part holds `fraction` of every class.
pub fn stratified_split(d: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (a, b) = stratified_split_indices(d.labels(), d.n_classes(), fraction, seed)?;
    Ok((d.subset(&a), d.subset(&b)))
}

/// Trusted and untrusted partitions sharing one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct BiqualityDataset {
    pub trusted: Dataset,
    pub untrusted: Dataset,
}

impl BiqualityDataset {
    pub fn new(trusted: Dataset, untrusted: Dataset) -> Result<Self> {
        trusted.check_same_schema(&untrusted)?;
        if trusted.is_empty() || untrusted.is_empty() {
            return Err(Error::DegenerateDataset(
                "trusted and untrusted partitions must both be non-empty".into(),
            ));
        }
        Ok(Self { trusted, untrusted })
    }

    pub fn n_trusted(&self) -> usize {
        self.trusted.n_samples()
    }

    pub fn n_untrusted(&self) -> usize {
        self.untrusted.n_samples()
    }

    pub fn n_classes(&self) -> usize {
        self.trusted.n_classes()
    }

    /// Trusted rows followed by untrusted rows.
    pub fn pooled(&self) -> Dataset {
        self.trusted.concat(&self.untrusted).expect("schema checked at construction")
    }

    /// Source flag per pooled row: `true` for trusted.
    pub fn source_flags(&self) -> Vec<bool> {
        let mut flags = vec![true; self.n_trusted()];
        flags.resize(self.n_trusted() + self.n_untrusted(), false);
        flags
    }
}

/// Parameters of the train/test and trusted/untrusted split protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub trusted_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("test_fraction", self.test_fraction), ("trusted_fraction", self.trusted_fraction)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(format!("{name} = {v} outside (0, 1)")));
            }
        }
        Ok(())
    }

    /// Returns `(biquality training data, clean test set)`.
    pub fn apply(&self, d: &Dataset) -> Result<(BiqualityDataset, Dataset)> {
        self.validate()?;
        let (test, train) = stratified_split(d, self.test_fraction, self.seed)?;
        let (trusted, untrusted) =
            stratified_split(&train, self.trusted_fraction, derive_seed(self.seed, 1))?;
        Ok((BiqualityDataset::new(trusted, untrusted)?, test))
    }
}

/// Two interleaving half circles. Class 0 lies on the upper unit arc, class 1
/// on the shifted lower arc; both receive isotropic Gaussian jitter.
pub fn make_two_moons(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(invalid("two moons needs n >= 2"));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(invalid(format!("noise_sd = {noise_sd} must be >= 0")));
    }
    let n_outer = n / 2;
    let n_inner = n - n_outer;
    let angle = |i: usize, m: usize| {
        if m <= 1 {
            0.0
        } else {
            std::f64::consts::PI * i as f64 / (m - 1) as f64
        }
    };
    let mut values = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n_outer {
        let t = angle(i, n_outer);
        values.extend([t.cos(), t.sin()]);
        labels.push(0);
    }
    for i in 0..n_inner {
        let t = angle(i, n_inner);
        values.extend([1.0 - t.cos(), 0.5 - t.sin()]);
        labels.push(1);
    }
    if noise_sd > 0.0 {
        let normal = Normal::new(0.0, noise_sd).map_err(|e| invalid(e.to_string()))?;
        let mut rng = seeded(seed);
        for v in values.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    let features = Array2::from_shape_vec((n, 2), values).expect("2 columns");
    Dataset::from_parts(features, labels, 2)
}

/// The default learning-curve grid: `0.005 * 2^i` up to 1.
pub fn default_ratio_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..8).map(|i| 0.005 * f64::powi(2.0, i)).collect();
    grid.push(1.0);
    grid
}

/// Outcome of [`calibrate_trusted_ratio`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustedRatio {
    pub ratio: f64,
    /// `false` when no grid value reached the target and the largest was returned.
    pub reached: bool,
    pub full_kappa: f64,
    /// Evaluated `(ratio, kappa)` points, in grid order.
    pub curve: Vec<(f64, f64)>,
}

/// Kappa on a fixed validation split for a learner trained on a stratified
/// `ratio`-fraction of the fitting part. Used by [`calibrate_trusted_ratio`].
pub struct LearningCurve<'a, L: Learner> {
    fit: Dataset,
    validation: Dataset,
    learner: &'a L,
    seed: u64,
}

impl<'a, L: Learner> LearningCurve<'a, L> {
    /// Splits `train` 75/25 into fitting and validation parts.
    pub fn new(train: &Dataset, learner: &'a L, seed: u64) -> Result<Self> {
        let (fit, validation) = stratified_split(train, 0.75, seed)?;
        Ok(Self {
            fit,
            validation,
            learner,
            seed,
        })
    }

    pub fn kappa_at(&self, ratio: f64, grid_index: usize) -> Result<f64> {
        let subset = if ratio >= 1.0 {
            self.fit.clone()
        } else {
            stratified_split(&self.fit, ratio, derive_seed(self.seed, grid_index as u64 + 1))?.0
        };
        let model = self.learner.fit_dataset(&subset, None)?;
        let predicted = model.predict(self.validation.features());
        let cm = ConfusionMatrix::from_predictions(
            self.validation.labels(),
            &predicted,
            self.validation.n_classes(),
        )?;
        cohens_kappa(&cm)
    }

    pub fn full_kappa(&self) -> Result<f64> {
        self.kappa_at(1.0, 0)
    }
}

/// Smallest grid ratio whose learning-curve kappa reaches `p` times the
/// full-training-set kappa.
pub fn calibrate_trusted_ratio<L: Learner>(
    train: &Dataset,
    p: f64,
    learner: &L,
    grid: &[f64],
    seed: u64,
) -> Result<TrustedRatio> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid(format!("p = {p} outside (0, 1]")));
    }
    if grid.is_empty() {
        return Err(invalid("empty ratio grid"));
    }
    if grid.iter().any(|&g| !(g > 0.0 && g <= 1.0)) || grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("ratio grid must be ascending within (0, 1]"));
    }
    let curve_eval = LearningCurve::new(train, learner, seed)?;
    let full_kappa = curve_eval.full_kappa()?;
    let target = p * full_kappa;
    let mut curve = Vec::new();
    for (i, &ratio) in grid.iter().enumerate() {
        let kappa = if ratio >= 1.0 {
            full_kappa
        } else {
            curve_eval.kappa_at(ratio, i)?
        };
        curve.push((ratio, kappa));
        if kappa >= target {
            return Ok(TrustedRatio {
                ratio,
                reached: true,
                full_kappa,
                curve,
            });
        }
    }
    Ok(TrustedRatio {
        ratio: *grid.last().expect("non-empty"),
        reached: false,
        full_kappa,
        curve,
    })
}
