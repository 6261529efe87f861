//! Axis-aligned CART classification tree (weighted Gini).
//!
//! Besides serving as a plain learner, the tree partitions the feature space
//! for concept-drift injection, which is why leaves keep their raw class
//! counts and a stable depth-first id.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_fit_inputs, normalize_or_uniform, Classifier, Learner};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SplitCriterion {
    #[default]
    Gini,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Every leaf must hold at least this fraction of the total training mass.
    pub min_leaf_fraction_per_class: f64,
    pub max_depth: Option<usize>,
    #[serde(default)]
    pub split_criterion: SplitCriterion,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            min_leaf_fraction_per_class: 0.10,
            max_depth: None,
            split_criterion: SplitCriterion::Gini,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        id: usize,
        /// Weighted class frequencies (the leaf's prediction).
        proba: Vec<f64>,
        /// Unweighted training counts per class.
        class_counts: Vec<usize>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

/// Summary of one leaf, as seen by consumers that rank leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafInfo {
    pub id: usize,
    pub class_counts: Vec<usize>,
}

impl LeafInfo {
    pub fn n_samples(&self) -> usize {
        self.class_counts.iter().sum()
    }

    /// Majority-class share of the leaf's samples (1 for a pure leaf).
    pub fn purity(&self) -> f64 {
        let n = self.n_samples();
        if n == 0 {
            return 0.0;
        }
        *self.class_counts.iter().max().expect("non-empty") as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    root: TreeNode,
    n_classes: usize,
    n_features: usize,
    n_leaves: usize,
    /// Set when the leaf-size constraint made any split impossible.
    unsatisfiable: bool,
}

impl DecisionTree {
    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn is_unsatisfiable(&self) -> bool {
        self.unsatisfiable
    }

    /// Leaf id reached by a row.
    pub fn apply(&self, row: ArrayView1<'_, f64>) -> usize {
        match self.leaf_for(row) {
            TreeNode::Leaf { id, .. } => *id,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    /// Leaves in id order.
    pub fn leaves(&self) -> Vec<LeafInfo> {
        fn walk(node: &TreeNode, out: &mut Vec<LeafInfo>) {
            match node {
                TreeNode::Leaf {
                    id, class_counts, ..
                } => out.push(LeafInfo {
                    id: *id,
                    class_counts: class_counts.clone(),
                }),
                TreeNode::Split { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        let mut out = Vec::with_capacity(self.n_leaves);
        walk(&self.root, &mut out);
        out
    }

    fn leaf_for(&self, row: ArrayView1<'_, f64>) -> &TreeNode {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { .. } => return node,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }
}

impl Classifier for DecisionTree {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((features.nrows(), self.n_classes));
        for (i, row) in features.outer_iter().enumerate() {
            if let TreeNode::Leaf { proba, .. } = self.leaf_for(row) {
                for (k, &p) in proba.iter().enumerate() {
                    out[[i, k]] = p;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TreeLearner {
    pub params: TreeParams,
}

impl TreeLearner {
    pub fn new(params: TreeParams) -> Self {
        Self { params }
    }
}

struct Builder<'a> {
    features: ArrayView2<'a, f64>,
    labels: &'a [usize],
    weights: &'a [f64],
    n_classes: usize,
    min_leaf_mass: f64,
    max_depth: Option<usize>,
    next_leaf: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn gini_mass(class_mass: &[f64], total: f64) -> f64 {
    // total * gini = total - sum(m_k^2) / total
    if total <= 0.0 {
        return 0.0;
    }
    total - class_mass.iter().map(|m| m * m).sum::<f64>() / total
}

impl Builder<'_> {
    fn leaf(&mut self, indices: &[usize]) -> TreeNode {
        let mut mass = vec![0.0; self.n_classes];
        let mut counts = vec![0; self.n_classes];
        for &i in indices {
            mass[self.labels[i]] += self.weights[i];
            counts[self.labels[i]] += 1;
        }
        normalize_or_uniform(&mut mass);
        let id = self.next_leaf;
        self.next_leaf += 1;
        TreeNode::Leaf {
            id,
            proba: mass,
            class_counts: counts,
        }
    }

    fn build(&mut self, indices: &mut [usize], depth: usize) -> TreeNode {
        let mut mass = vec![0.0; self.n_classes];
        for &i in indices.iter() {
            mass[self.labels[i]] += self.weights[i];
        }
        let total: f64 = mass.iter().sum();
        let pure = mass.iter().filter(|&&m| m > 0.0).count() <= 1;
        let depth_reached = self.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || total < 2.0 * self.min_leaf_mass {
            return self.leaf(indices);
        }
        let Some(best) = self.best_split(indices, &mass, total) else {
            return self.leaf(indices);
        };
        let (feature, threshold) = (best.feature, best.threshold);
        let split_at = partition(indices, |&i| self.features[[i, feature]] <= threshold);
        let (left_idx, right_idx) = indices.split_at_mut(split_at);
        let left = self.build(left_idx, depth + 1);
        let right = self.build(right_idx, depth + 1);
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn best_split(&self, indices: &[usize], mass: &[f64], total: f64) -> Option<BestSplit> {
        let parent = gini_mass(mass, total);
        let mut best: Option<BestSplit> = None;
        let mut order: Vec<usize> = indices.to_vec();
        let mut left_mass = vec![0.0; self.n_classes];
        for feature in 0..self.features.ncols() {
            let column = self.features.column(feature);
            order.sort_by(|&a, &b| column[a].total_cmp(&column[b]));
            left_mass.iter_mut().for_each(|m| *m = 0.0);
            let mut left_total = 0.0;
            for pos in 0..order.len() - 1 {
                let i = order[pos];
                left_mass[self.labels[i]] += self.weights[i];
                left_total += self.weights[i];
                let (here, next) = (column[i], column[order[pos + 1]]);
                if here == next {
                    continue;
                }
                let right_total = total - left_total;
                if left_total < self.min_leaf_mass || right_total < self.min_leaf_mass {
                    continue;
                }
                let right_mass: Vec<f64> =
                    mass.iter().zip(&left_mass).map(|(m, l)| m - l).collect();
                let gain = parent
                    - gini_mass(&left_mass, left_total)
                    - gini_mass(&right_mass, right_total);
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = 0.5 * (here + next);
                    if threshold >= next {
                        threshold = here;
                    }
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        gain,
                    });
                }
            }
        }
        // zero-gain splits are kept (XOR-like structure needs them); negative
        // gains only arise from rounding
        best.filter(|b| b.gain >= -1e-12 * total.max(1.0))
    }
}

/// In-place stable-enough partition; returns the number of elements satisfying `pred`.
fn partition<T: Copy>(items: &mut [T], pred: impl Fn(&T) -> bool) -> usize {
    let (yes, no): (Vec<T>, Vec<T>) = items.iter().partition(|x| pred(x));
    let n = yes.len();
    for (slot, v) in items.iter_mut().zip(yes.into_iter().chain(no)) {
        *slot = v;
    }
    n
}

impl Learner for TreeLearner {
    type Model = DecisionTree;

    fn fit(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[usize],
        n_classes: usize,
        weights: Option<&[f64]>,
    ) -> Result<DecisionTree> {
        let weights = check_fit_inputs(features, labels, n_classes, weights)?;
        let f = self.params.min_leaf_fraction_per_class;
        if !(f > 0.0 && f.is_finite()) {
            return Err(invalid(format!("min_leaf_fraction_per_class = {f} must be > 0")));
        }
        let total: f64 = weights.iter().sum();
        let min_leaf_mass = f * total;
        let unsatisfiable = 2.0 * min_leaf_mass > total * (1.0 + 1e-12);
        let mut builder = Builder {
            features,
            labels,
            weights: &weights,
            n_classes,
            min_leaf_mass,
            max_depth: self.params.max_depth,
            next_leaf: 0,
        };
        let mut indices: Vec<usize> = (0..labels.len()).collect();
        let root = if unsatisfiable {
            builder.leaf(&indices)
        } else {
            builder.build(&mut indices, 0)
        };
        Ok(DecisionTree {
            root,
            n_classes,
            n_features: features.ncols(),
            n_leaves: builder.next_leaf,
            unsatisfiable,
        })
    }
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;
    use crate::learners::testing::assert_probability_rows;

    fn xor_data() -> (Array2<f64>, Vec<usize>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..5 {
            for (a, b) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)] {
                rows.extend([a as f64, b as f64]);
                labels.push(a ^ b);
            }
        }
        (Array2::from_shape_vec((labels.len(), 2), rows).unwrap(), labels)
    }

    #[test]
    fn pure_input_gives_single_certain_leaf() {
        let x = array![[0.0], [1.0], [2.0]];
        let tree = TreeLearner::default().fit(x.view(), &[1, 1, 1], 2, None).unwrap();
        assert_eq!(tree.n_leaves(), 1);
        assert!(!tree.is_unsatisfiable());
        assert_eq!(tree.predict_proba(x.view()).row(0).to_vec(), vec![0.0, 1.0]);
    }

    #[test]
    fn xor_is_learned_exactly() {
        // truth table: (0,0)->0, (0,1)->1, (1,0)->1, (1,1)->0
        let (x, y) = xor_data();
        let params = TreeParams {
            min_leaf_fraction_per_class: 0.05,
            max_depth: Some(2),
            ..TreeParams::default()
        };
        let tree = TreeLearner::new(params).fit(x.view(), &y, 2, None).unwrap();
        assert_eq!(tree.predict(x.view()), y);
        assert_eq!(tree.n_leaves(), 4);
    }

    #[test]
    fn oversized_leaf_constraint_is_flagged() {
        let (x, y) = xor_data();
        let params = TreeParams {
            min_leaf_fraction_per_class: 0.6,
            ..TreeParams::default()
        };
        let tree = TreeLearner::new(params).fit(x.view(), &y, 2, None).unwrap();
        assert!(tree.is_unsatisfiable());
        assert_eq!(tree.n_leaves(), 1);
    }

    #[test]
    fn leaves_respect_minimum_mass() {
        let d = crate::data::make_two_moons(400, 0.2, 1).unwrap();
        let tree = TreeLearner::new(TreeParams::default()).fit_dataset(&d, None).unwrap();
        assert!(tree.n_leaves() > 1);
        for leaf in tree.leaves() {
            assert!(leaf.n_samples() >= 40, "leaf {} has {}", leaf.id, leaf.n_samples());
        }
        let total: usize = tree.leaves().iter().map(LeafInfo::n_samples).sum();
        assert_eq!(total, 400);
        assert_probability_rows(&tree.predict_proba(d.features()));
    }

    #[test]
    fn apply_matches_leaf_counts() {
        let d = crate::data::make_two_moons(300, 0.2, 2).unwrap();
        let tree = TreeLearner::default().fit_dataset(&d, None).unwrap();
        let mut counts = vec![vec![0usize; 2]; tree.n_leaves()];
        for i in 0..d.n_samples() {
            counts[tree.apply(d.row(i))][d.labels()[i]] += 1;
        }
        for leaf in tree.leaves() {
            assert_eq!(counts[leaf.id], leaf.class_counts);
        }
    }

    #[test]
    fn integer_weights_match_row_replication() {
        let d = crate::data::make_two_moons(60, 0.3, 9).unwrap();
        let weights: Vec<f64> = (0..60).map(|i| (1 + i % 3) as f64).collect();
        let mut replicated = Vec::new();
        for (i, &w) in weights.iter().enumerate() {
            replicated.extend(std::iter::repeat_n(i, w as usize));
        }
        let rep = d.subset(&replicated);
        let learner = TreeLearner::new(TreeParams {
            min_leaf_fraction_per_class: 0.05,
            ..TreeParams::default()
        });
        let a = learner.fit_dataset(&d, Some(&weights)).unwrap();
        let b = learner.fit_dataset(&rep, None).unwrap();
        let grid = crate::data::make_two_moons(200, 0.5, 10).unwrap();
        let pa = a.predict_proba(grid.features());
        let pb = b.predict_proba(grid.features());
        assert!(pa.iter().zip(pb.iter()).all(|(x, y)| (x - y).abs() < 1e-6));
    }

    #[test]
    fn json_round_trip() {
        let d = crate::data::make_two_moons(100, 0.2, 2).unwrap();
        let tree = TreeLearner::default().fit_dataset(&d, None).unwrap();
        let json = serde_json::to_string(&tree).unwrap();
        assert!(json.contains("\"type\":\"split\""));
        let back: DecisionTree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tree);
    }
}
