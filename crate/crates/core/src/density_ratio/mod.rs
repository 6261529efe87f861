//! Covariate-shift density-ratio estimation between a trusted and an
//! untrusted sample.

mod kmm;

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::BiqualityDataset;
use crate::error::{invalid, Error, Result};
use crate::learners::{clip_probability, Classifier, Learner};

pub use kmm::{
    default_gamma, kmm_objective, kmm_weights, mmd_squared, project_box_slab, rbf_kernel,
    solve_box_slab_qp, KmmParams, KmmSolution, QpSolution,
};

/// Pooled features with a source label: 1 for trusted, 0 for untrusted.
#[derive(Debug, Clone)]
pub struct SourceLabeledSet {
    features: Array2<f64>,
    source: Vec<usize>,
    n_trusted: usize,
}

impl SourceLabeledSet {
    /// Trusted rows first, then untrusted rows.
    pub fn new(trusted: ArrayView2<'_, f64>, untrusted: ArrayView2<'_, f64>) -> Result<Self> {
        if trusted.nrows() == 0 || untrusted.nrows() == 0 {
            return Err(invalid("both sources must be non-empty"));
        }
        if trusted.ncols() != untrusted.ncols() {
            return Err(invalid("trusted and untrusted feature counts differ"));
        }
        let features = concatenate(Axis(0), &[trusted, untrusted]).expect("column counts match");
        let mut source = vec![1; trusted.nrows()];
        source.extend(std::iter::repeat_n(0, untrusted.nrows()));
        Ok(Self {
            features,
            source,
            n_trusted: trusted.nrows(),
        })
    }

    pub fn from_biquality(biq: &BiqualityDataset) -> Result<Self> {
        Self::new(biq.trusted.features(), biq.untrusted.features())
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    /// Source labels usable as class ids (1 = trusted).
    pub fn source(&self) -> &[usize] {
        &self.source
    }

    pub fn n_trusted(&self) -> usize {
        self.n_trusted
    }

    pub fn n_untrusted(&self) -> usize {
        self.source.len() - self.n_trusted
    }

    pub fn untrusted_features(&self) -> ArrayView2<'_, f64> {
        self.features.slice(ndarray::s![self.n_trusted.., ..])
    }
}

/// Nonnegative finite weights aligned to a dataset's rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid(format!("weight {v} is not finite and nonnegative")));
        }
        Ok(Self(values))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            0.0
        } else {
            self.0.iter().sum::<f64>() / self.0.len() as f64
        }
    }

    /// Single `weight` column, one row per value.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["weight"])?;
        for v in &self.0 {
            w.write_record([format!("{v:?}")])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() != 1 || &headers[0] != "weight" {
            return Err(Error::Schema("weight file must have a single `weight` column".into()));
        }
        let mut values = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let v: f64 = rec[0].trim().parse().map_err(|e| Error::Parse {
                row: i + 1,
                column: "weight".into(),
                message: format!("{e}"),
            })?;
            values.push(v);
        }
        Self::new(values)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Vec<f64> {
        w.0
    }
}

/// Probabilistic density ratio from a source posterior `p = P(S=1|x)`:
/// `p / (1 - p) * n_untrusted / n_trusted`, with `p` clipped.
pub fn pdr_ratio(p_trusted: f64, n_trusted: usize, n_untrusted: usize) -> f64 {
    let p = clip_probability(p_trusted);
    p / (1.0 - p) * n_untrusted as f64 / n_trusted as f64
}

/// PDR weights on `untrusted` rows from an already fitted source classifier
/// (class 1 = trusted).
pub fn pdr_weights_from_model(
    source_model: &dyn Classifier,
    untrusted: ArrayView2<'_, f64>,
    n_trusted: usize,
    n_untrusted: usize,
) -> Result<WeightVector> {
    if n_trusted == 0 || n_untrusted == 0 {
        return Err(invalid("both sources must be non-empty"));
    }
    if source_model.n_classes() != 2 {
        return Err(invalid("source classifier must be binary"));
    }
    let proba = source_model.predict_proba(untrusted);
    WeightVector::new(
        proba
            .column(1)
            .iter()
            .map(|&p| pdr_ratio(p, n_trusted, n_untrusted))
            .collect(),
    )
}

/// Fits a source classifier on the pooled sample and returns PDR weights for
/// the untrusted rows.
pub fn pdr_weights<L: Learner>(
    trusted: ArrayView2<'_, f64>,
    untrusted: ArrayView2<'_, f64>,
    learner: &L,
) -> Result<WeightVector> {
    let set = SourceLabeledSet::new(trusted, untrusted)?;
    let model = learner.fit(set.features(), set.source(), 2, None)?;
    pdr_weights_from_model(&model, set.untrusted_features(), set.n_trusted(), set.n_untrusted())
}
