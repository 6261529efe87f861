use serde::{Deserialize, Serialize};

use super::{CorruptionAudit, CorruptionFlag, Derangement};
use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::learners::tree::LeafInfo;
use crate::learners::{Learner, TreeLearner, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptDriftSpec {
    /// Target share of relabeled rows.
    pub r: f64,
    pub min_leaf_fraction_per_class: f64,
    pub permutation: Derangement,
}

impl ConceptDriftSpec {
    /// Spec with the default leaf constraint and a random derangement.
    pub fn new(r: f64, n_classes: usize, seed: u64) -> Result<Self> {
        let spec = Self {
            r,
            min_leaf_fraction_per_class: TreeParams::default().min_leaf_fraction_per_class,
            permutation: Derangement::random(n_classes, seed)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.r) {
            return Err(invalid(format!("r = {} outside [0, 1]", self.r)));
        }
        if !(self.min_leaf_fraction_per_class > 0.0 && self.min_leaf_fraction_per_class <= 1.0) {
            return Err(invalid("min_leaf_fraction_per_class must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Leaves to corrupt: purest first, then larger, then lower id, until their
/// sample count first reaches `r * n`.
pub fn select_leaves(leaves: &[LeafInfo], r: f64, n: usize) -> Vec<usize> {
    if r <= 0.0 {
        return Vec::new();
    }
    let mut order: Vec<&LeafInfo> = leaves.iter().filter(|l| l.n_samples() > 0).collect();
    order.sort_by(|a, b| {
        b.purity()
            .total_cmp(&a.purity())
            .then(b.n_samples().cmp(&a.n_samples()))
            .then(a.id.cmp(&b.id))
    });
    let target = r * n as f64;
    let mut mass = 0;
    let mut chosen = Vec::new();
    for leaf in order {
        if mass as f64 >= target {
            break;
        }
        mass += leaf.n_samples();
        chosen.push(leaf.id);
    }
    chosen
}

/// Relabels every row of the selected leaves through the derangement.
pub fn inject_concept_drift(d: &Dataset, spec: &ConceptDriftSpec) -> Result<(Dataset, CorruptionAudit)> {
    spec.validate()?;
    if spec.permutation.n_classes() != d.n_classes() {
        return Err(invalid("derangement size differs from the class count"));
    }
    let n = d.n_samples();
    let mut audit = CorruptionAudit::identity(n);
    if spec.r == 0.0 || n == 0 {
        return Ok((d.clone(), audit));
    }
    let tree = TreeLearner::new(TreeParams {
        min_leaf_fraction_per_class: spec.min_leaf_fraction_per_class,
        ..TreeParams::default()
    })
    .fit_dataset(d, None)?;
    let leaves = tree.leaves();
    if leaves.len() == 1 {
        audit.flags.push(CorruptionFlag::DegenerateTree);
    }
    let chosen = select_leaves(&leaves, spec.r, n);
    let mut selected = vec![false; leaves.iter().map(|l| l.id).max().unwrap_or(0) + 1];
    for &id in &chosen {
        selected[id] = true;
    }
    for &id in &chosen {
        let leaf = leaves.iter().find(|l| l.id == id).expect("leaf exists");
        audit.leaf_purities.push(leaf.purity());
        audit.leaf_sizes.push(leaf.n_samples());
    }

    let mut labels = d.labels().to_vec();
    for (i, row) in d.features().outer_iter().enumerate() {
        if selected[tree.apply(row)] {
            labels[i] = spec.permutation.apply(labels[i]);
            audit.flipped_indices.push(i);
        }
    }
    audit.realized_noise_fraction = audit.flipped_indices.len() as f64 / n as f64;
    audit.permutation = Some(spec.permutation.clone());
    Ok((d.with_labels(labels)?, audit))
}
