//! Synthetic distribution-shift injectors for untrusted data.
//!
//! [`inject_concept_drift`] relabels whole decision-tree leaves through a
//! class derangement, which changes `P(Y | X)`. [`inject_class_conditional_shift`]
//! subsamples the smaller k-means clusters of every class, which changes
//! `P(X | Y)`. Both leave the input untouched outside the affected rows and
//! report what they did in a [`CorruptionAudit`].

mod class_conditional;
mod concept_drift;
mod kmeans;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::seeded;

pub use class_conditional::{inject_class_conditional_shift, plan_keep_counts, ClassConditionalSpec};
pub use concept_drift::{inject_concept_drift, select_leaves, ConceptDriftSpec};
pub use kmeans::{kmeans, kmeans_restarts, mean_silhouette, KMeans};

/// A permutation of the class ids without fixed points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Derangement {
    mapping: Vec<usize>,
}

impl Derangement {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let k = mapping.len();
        if k < 2 {
            return Err(invalid("a derangement needs at least 2 classes"));
        }
        let mut seen = vec![false; k];
        for (i, &m) in mapping.iter().enumerate() {
            if m >= k || seen[m] {
                return Err(invalid(format!("{mapping:?} is not a permutation")));
            }
            if m == i {
                return Err(invalid(format!("{mapping:?} maps {i} to itself")));
            }
            seen[m] = true;
        }
        Ok(Self { mapping })
    }

    /// Uniform random derangement by rejection sampling.
    pub fn random(n_classes: usize, seed: u64) -> Result<Self> {
        if n_classes < 2 {
            return Err(invalid("a derangement needs at least 2 classes"));
        }
        let mut rng = seeded(seed);
        let mut mapping: Vec<usize> = (0..n_classes).collect();
        loop {
            mapping.shuffle(&mut rng);
            if mapping.iter().enumerate().all(|(i, &m)| i != m) {
                return Ok(Self { mapping });
            }
        }
    }

    pub fn apply(&self, class: usize) -> usize {
        self.mapping[class]
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn n_classes(&self) -> usize {
        self.mapping.len()
    }
}

impl TryFrom<Vec<usize>> for Derangement {
    type Error = crate::Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Derangement> for Vec<usize> {
    fn from(d: Derangement) -> Vec<usize> {
        d.mapping
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorruptionFlag {
    /// The drift tree could not split, so its single leaf was used.
    DegenerateTree,
    /// A class was too small to cluster and was left untouched.
    ClassTooSmall { class: usize },
}

/// What a corruption step changed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionAudit {
    /// Share of rows whose label was changed.
    pub realized_noise_fraction: f64,
    /// Rows (input order) whose label was changed.
    pub flipped_indices: Vec<usize>,
    /// Share of rows kept by subsampling.
    pub kept_fraction: f64,
    /// Rows (input order) kept by subsampling.
    pub kept_indices: Vec<usize>,
    /// Cluster count chosen per class (empty when no clustering ran).
    pub clusters_per_class: Vec<usize>,
    /// Purity of each selected leaf, in selection order.
    pub leaf_purities: Vec<f64>,
    /// Sample count of each selected leaf, in selection order.
    pub leaf_sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<Derangement>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<CorruptionFlag>,
}

impl CorruptionAudit {
    pub(crate) fn identity(n: usize) -> Self {
        Self {
            realized_noise_fraction: 0.0,
            flipped_indices: Vec::new(),
            kept_fraction: 1.0,
            kept_indices: (0..n).collect(),
            clusters_per_class: Vec::new(),
            leaf_purities: Vec::new(),
            leaf_sizes: Vec::new(),
            permutation: None,
            flags: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_derangements_have_no_fixed_points() {
        for k in 2..8 {
            for seed in 0..20 {
                let d = Derangement::random(k, seed).unwrap();
                assert!((0..k).all(|c| d.apply(c) != c));
                let mut m = d.mapping().to_vec();
                m.sort();
                assert_eq!(m, (0..k).collect::<Vec<_>>());
            }
        }
        assert!(Derangement::random(1, 0).is_err());
    }

    #[test]
    fn validation() {
        assert!(Derangement::new(vec![1, 2, 0]).is_ok());
        assert!(Derangement::new(vec![0, 2, 1]).is_err());
        assert!(Derangement::new(vec![1, 1, 0]).is_err());
        let json = serde_json::to_string(&Derangement::new(vec![1, 0]).unwrap()).unwrap();
        assert_eq!(json, "[1,0]");
        assert!(serde_json::from_str::<Derangement>("[0,1]").is_err());
    }
}
