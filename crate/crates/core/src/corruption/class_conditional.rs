use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans_restarts, mean_silhouette};
use super::{CorruptionAudit, CorruptionFlag};
use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::rng::{derive_seed, seeded};

/// Points used to score a candidate cluster count.
const SILHOUETTE_SAMPLE: usize = 2000;
const KMEANS_RESTARTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassConditionalSpec {
    /// Subsampling ratio, at least 1; may be infinite.
    pub rho: f64,
    /// Inclusive range of cluster counts searched per class.
    pub k_range: (usize, usize),
    pub seed: u64,
}

impl ClassConditionalSpec {
    pub fn new(rho: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            rho,
            k_range: (2, 10),
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 1.0) {
            return Err(invalid(format!("rho = {} must be >= 1", self.rho)));
        }
        if self.k_range.0 < 2 || self.k_range.1 < self.k_range.0 {
            return Err(invalid("k_range must satisfy 2 <= min <= max"));
        }
        Ok(())
    }
}

/// Rows to keep per cluster, for clusters sorted by size descending: the
/// larger half (rounded up) is kept whole, every other cluster keeps
/// `round(size / rho)` rows and at least one.
pub fn plan_keep_counts(sizes_desc: &[usize], rho: f64) -> Vec<usize> {
    let untouched = sizes_desc.len().div_ceil(2);
    sizes_desc
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            if i < untouched || s == 0 {
                s
            } else {
                ((s as f64 / rho).round() as usize).clamp(1, s)
            }
        })
        .collect()
}

fn choose_clustering(x: ndarray::ArrayView2<'_, f64>, k_range: (usize, usize), seed: u64) -> Result<Vec<usize>> {
    let n = x.nrows();
    let sample: Vec<usize> = if n > SILHOUETTE_SAMPLE {
        let mut s = index::sample(&mut seeded(derive_seed(seed, 1)), n, SILHOUETTE_SAMPLE).into_vec();
        s.sort_unstable();
        s
    } else {
        (0..n).collect()
    };
    let xs = x.select(ndarray::Axis(0), &sample);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for k in k_range.0..=k_range.1.min(n - 1) {
        let km = kmeans_restarts(x, k, derive_seed(seed, 10 + k as u64), KMEANS_RESTARTS)?;
        let labels: Vec<usize> = sample.iter().map(|&i| km.assignments[i]).collect();
        let Ok(score) = mean_silhouette(xs.view(), &labels) else {
            continue;
        };
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, km.assignments));
        }
    }
    best.map(|(_, a)| a).ok_or_else(|| invalid("no cluster count produced two clusters"))
}

/// Subsamples the smaller clusters of every class by `rho`.
///
/// At `rho = 1` nothing can be removed, so the input is returned without
/// clustering.
pub fn inject_class_conditional_shift(
    d: &Dataset,
    spec: &ClassConditionalSpec,
) -> Result<(Dataset, CorruptionAudit)> {
    spec.validate()?;
    let n = d.n_samples();
    let mut audit = CorruptionAudit::identity(n);
    if spec.rho == 1.0 || n == 0 {
        return Ok((d.clone(), audit));
    }
    let mut keep = vec![false; n];
    audit.clusters_per_class = vec![0; d.n_classes()];
    for class in 0..d.n_classes() {
        let rows = d.class_indices(class);
        if rows.len() <= spec.k_range.0 {
            if !rows.is_empty() {
                audit.flags.push(CorruptionFlag::ClassTooSmall { class });
            }
            rows.iter().for_each(|&i| keep[i] = true);
            continue;
        }
        let x = d.features().select(ndarray::Axis(0), &rows);
        let class_seed = derive_seed(spec.seed, class as u64);
        let assignments = choose_clustering(x.view(), spec.k_range, class_seed)?;
        let c = assignments.iter().max().map_or(0, |m| m + 1);
        audit.clusters_per_class[class] = c;
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); c];
        for (local, &a) in assignments.iter().enumerate() {
            members[a].push(rows[local]);
        }
        members.sort_by(|a, b| b.len().cmp(&a.len()).then(a.first().cmp(&b.first())));
        let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
        let counts = plan_keep_counts(&sizes, spec.rho);
        let mut rng = seeded(derive_seed(class_seed, 2));
        for (cluster, &count) in members.iter_mut().zip(&counts) {
            cluster.shuffle(&mut rng);
            cluster.iter().take(count).for_each(|&i| keep[i] = true);
        }
    }
    audit.kept_indices = (0..n).filter(|&i| keep[i]).collect();
    audit.kept_fraction = audit.kept_indices.len() as f64 / n as f64;
    Ok((d.subset(&audit.kept_indices), audit))
}
