//! Histogram-based gradient boosting for multiclass log-loss.
//!
//! Each round fits one regression tree per class on the softmax gradients
//! (Newton leaf values `-G / (H + l2)`), grown best-first over binned
//! features. Sample weights scale both gradients and hessians, so fitted
//! models are invariant to a global rescaling of the weights.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_fit_inputs, class_distribution, Classifier, Learner};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_bins: usize,
    pub max_depth: Option<usize>,
    pub max_leaf_nodes: usize,
    pub min_samples_leaf: usize,
    pub l2_regularization: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.1,
            max_bins: 255,
            max_depth: None,
            max_leaf_nodes: 31,
            min_samples_leaf: 20,
            l2_regularization: 0.0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_rounds < 1 {
            return Err(invalid("n_rounds must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(invalid(format!("learning_rate {} outside (0, 1]", self.learning_rate)));
        }
        if !(2..=256).contains(&self.max_bins) {
            return Err(invalid(format!("max_bins {} outside [2, 256]", self.max_bins)));
        }
        if self.max_leaf_nodes < 2 {
            return Err(invalid("max_leaf_nodes must be >= 2"));
        }
        if self.min_samples_leaf < 1 {
            return Err(invalid("min_samples_leaf must be >= 1"));
        }
        if !(self.l2_regularization >= 0.0) {
            return Err(invalid("l2_regularization must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RegressionNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<RegressionNode>,
        right: Box<RegressionNode>,
    },
}

impl RegressionNode {
    fn eval(&self, row: ndarray::ArrayView1<'_, f64>) -> f64 {
        let mut node = self;
        loop {
            match node {
                RegressionNode::Leaf { value } => return *value,
                RegressionNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if row[*feature] <= *threshold { left } else { right },
            }
        }
    }

    fn negated(&self) -> RegressionNode {
        match self {
            RegressionNode::Leaf { value } => RegressionNode::Leaf { value: -value },
            RegressionNode::Split {
                feature,
                threshold,
                left,
                right,
            } => RegressionNode::Split {
                feature: *feature,
                threshold: *threshold,
                left: Box::new(left.negated()),
                right: Box::new(right.negated()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    n_classes: usize,
    n_features: usize,
    /// Raw score before any tree (log of the weighted class prior).
    baseline: Vec<f64>,
    /// `trees[round][class]`.
    trees: Vec<Vec<RegressionNode>>,
    /// Weighted mean log-loss on the training set after each round.
    train_loss: Vec<f64>,
}

impl GbtModel {
    pub fn train_loss(&self) -> &[f64] {
        &self.train_loss
    }

    pub fn n_rounds(&self) -> usize {
        self.trees.len()
    }

    fn raw_scores(&self, features: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut raw = Array2::zeros((features.nrows(), self.n_classes));
        for (i, row) in features.outer_iter().enumerate() {
            for k in 0..self.n_classes {
                raw[[i, k]] = self.baseline[k];
            }
            for round in &self.trees {
                for (k, tree) in round.iter().enumerate() {
                    raw[[i, k]] += tree.eval(row);
                }
            }
        }
        raw
    }
}

fn softmax_rows(raw: &mut Array2<f64>) {
    for mut row in raw.outer_iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

impl Classifier for GbtModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut raw = self.raw_scores(features);
        softmax_rows(&mut raw);
        raw
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GbtLearner {
    pub params: GbtParams,
}

impl GbtLearner {
    pub fn new(params: GbtParams) -> Self {
        Self { params }
    }
}

/// Per-feature upper bin edges; `bin(x)` is the number of edges strictly below `x`.
struct BinMapper {
    edges: Vec<Vec<f64>>,
}

impl BinMapper {
    fn fit(features: ArrayView2<'_, f64>, max_bins: usize) -> Self {
        let edges = features
            .columns()
            .into_iter()
            .map(|col| {
                let mut sorted: Vec<f64> = col.to_vec();
                sorted.sort_by(f64::total_cmp);
                let mut distinct = sorted.clone();
                distinct.dedup();
                if distinct.len() <= max_bins {
                    distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
                } else {
                    let n = sorted.len();
                    let mut e: Vec<f64> = (1..max_bins).map(|j| sorted[j * n / max_bins]).collect();
                    e.dedup();
                    e
                }
            })
            .collect();
        Self { edges }
    }

    fn bin_columns(&self, features: ArrayView2<'_, f64>) -> Vec<Vec<u8>> {
        self.edges
            .iter()
            .enumerate()
            .map(|(j, edges)| {
                features
                    .column(j)
                    .iter()
                    .map(|&x| edges.partition_point(|&e| e < x) as u8)
                    .collect()
            })
            .collect()
    }

    fn n_bins(&self, feature: usize) -> usize {
        self.edges[feature].len() + 1
    }
}

#[derive(Clone, Copy, Default)]
struct HistBin {
    g: f64,
    h: f64,
    n: u32,
}

#[derive(Clone, Copy)]
struct SplitCandidate {
    feature: usize,
    bin: usize,
    gain: f64,
}

struct OpenLeaf {
    node: usize,
    indices: Vec<u32>,
    depth: usize,
    sum_g: f64,
    sum_h: f64,
    hist: Vec<HistBin>,
    candidate: Option<SplitCandidate>,
}

enum ArenaNode {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

struct TreeGrower<'a> {
    bins: &'a [Vec<u8>],
    mapper: &'a BinMapper,
    offsets: Vec<usize>,
    params: &'a GbtParams,
    min_child_hessian: f64,
}

impl TreeGrower<'_> {
    fn histogram(&self, indices: &[u32], g: &[f64], h: &[f64]) -> Vec<HistBin> {
        let mut hist = vec![HistBin::default(); *self.offsets.last().expect("offsets")];
        for (f, column) in self.bins.iter().enumerate() {
            let base = self.offsets[f];
            for &i in indices {
                let i = i as usize;
                let slot = &mut hist[base + column[i] as usize];
                slot.g += g[i];
                slot.h += h[i];
                slot.n += 1;
            }
        }
        hist
    }

    fn leaf_value(&self, sum_g: f64, sum_h: f64) -> f64 {
        let denom = sum_h + self.params.l2_regularization;
        if denom > 0.0 {
            -self.params.learning_rate * sum_g / denom
        } else {
            0.0
        }
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.params.l2_regularization;
        if denom > 0.0 {
            g * g / denom
        } else {
            0.0
        }
    }

    fn find_split(&self, leaf: &OpenLeaf) -> Option<SplitCandidate> {
        let n = leaf.indices.len();
        let min_leaf = self.params.min_samples_leaf;
        if n < 2 * min_leaf || self.params.max_depth.is_some_and(|d| leaf.depth >= d) {
            return None;
        }
        let parent = self.score(leaf.sum_g, leaf.sum_h);
        let mut best: Option<SplitCandidate> = None;
        for f in 0..self.bins.len() {
            let base = self.offsets[f];
            let n_bins = self.mapper.n_bins(f);
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
            for b in 0..n_bins - 1 {
                let slot = leaf.hist[base + b];
                gl += slot.g;
                hl += slot.h;
                nl += slot.n as usize;
                let nr = n - nl;
                if nl < min_leaf {
                    continue;
                }
                if nr < min_leaf {
                    break;
                }
                let (gr, hr) = (leaf.sum_g - gl, leaf.sum_h - hl);
                if hl < self.min_child_hessian || hr < self.min_child_hessian {
                    continue;
                }
                let gain = self.score(gl, hl) + self.score(gr, hr) - parent;
                if gain > 0.0 && best.is_none_or(|c| gain > c.gain) {
                    best = Some(SplitCandidate {
                        feature: f,
                        bin: b,
                        gain,
                    });
                }
            }
        }
        best
    }

    /// Grows one tree; returns it and the per-sample leaf value contribution.
    fn grow(&self, g: &[f64], h: &[f64], n_samples: usize) -> (RegressionNode, Vec<f64>) {
        let indices: Vec<u32> = (0..n_samples as u32).collect();
        let (sum_g, sum_h) = (g.iter().sum(), h.iter().sum());
        let mut arena = vec![ArenaNode::Leaf(0.0)];
        let mut root = OpenLeaf {
            node: 0,
            hist: self.histogram(&indices, g, h),
            indices,
            depth: 0,
            sum_g,
            sum_h,
            candidate: None,
        };
        root.candidate = self.find_split(&root);
        let mut open = vec![root];
        let mut closed: Vec<OpenLeaf> = Vec::new();

        while open.len() + closed.len() < self.params.max_leaf_nodes {
            let pick = open
                .iter()
                .enumerate()
                .filter_map(|(i, l)| l.candidate.map(|c| (i, c.gain)))
                .fold(None, |acc: Option<(usize, f64)>, (i, gain)| match acc {
                    Some((_, g)) if g >= gain => acc,
                    _ => Some((i, gain)),
                });
            let Some((pos, _)) = pick else { break };
            let parent = open.swap_remove(pos);
            let c = parent.candidate.expect("picked leaves have a candidate");
            let column = &self.bins[c.feature];
            let (left_idx, right_idx): (Vec<u32>, Vec<u32>) = parent
                .indices
                .iter()
                .partition(|&&i| (column[i as usize] as usize) <= c.bin);

            let small_is_left = left_idx.len() <= right_idx.len();
            let small_hist = self.histogram(if small_is_left { &left_idx } else { &right_idx }, g, h);
            let large_hist: Vec<HistBin> = parent
                .hist
                .iter()
                .zip(&small_hist)
                .map(|(p, s)| HistBin {
                    g: p.g - s.g,
                    h: p.h - s.h,
                    n: p.n - s.n,
                })
                .collect();
            let (left_hist, right_hist) = if small_is_left {
                (small_hist, large_hist)
            } else {
                (large_hist, small_hist)
            };

            let left_node = arena.len();
            arena.push(ArenaNode::Leaf(0.0));
            let right_node = arena.len();
            arena.push(ArenaNode::Leaf(0.0));
            arena[parent.node] = ArenaNode::Split {
                feature: c.feature,
                threshold: self.mapper.edges[c.feature][c.bin],
                left: left_node,
                right: right_node,
            };
            for (node, idx, hist) in [(left_node, left_idx, left_hist), (right_node, right_idx, right_hist)] {
                let sum_g = idx.iter().map(|&i| g[i as usize]).sum();
                let sum_h = idx.iter().map(|&i| h[i as usize]).sum();
                let mut child = OpenLeaf {
                    node,
                    indices: idx,
                    depth: parent.depth + 1,
                    sum_g,
                    sum_h,
                    hist,
                    candidate: None,
                };
                child.candidate = self.find_split(&child);
                if child.candidate.is_some() {
                    open.push(child);
                } else {
                    closed.push(child);
                }
            }
        }

        let mut contribution = vec![0.0; n_samples];
        for leaf in open.iter().chain(&closed) {
            let value = self.leaf_value(leaf.sum_g, leaf.sum_h);
            arena[leaf.node] = ArenaNode::Leaf(value);
            for &i in &leaf.indices {
                contribution[i as usize] = value;
            }
        }
        (to_nested(&arena, 0), contribution)
    }
}

fn to_nested(arena: &[ArenaNode], id: usize) -> RegressionNode {
    match arena[id] {
        ArenaNode::Leaf(value) => RegressionNode::Leaf { value },
        ArenaNode::Split {
            feature,
            threshold,
            left,
            right,
        } => RegressionNode::Split {
            feature,
            threshold,
            left: Box::new(to_nested(arena, left)),
            right: Box::new(to_nested(arena, right)),
        },
    }
}

fn weighted_log_loss(proba: &Array2<f64>, labels: &[usize], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -weights[i] * proba[[i, y]].max(1e-15).ln())
        .sum::<f64>()
        / total
}

impl Learner for GbtLearner {
    type Model = GbtModel;

    fn fit(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[usize],
        n_classes: usize,
        weights: Option<&[f64]>,
    ) -> Result<GbtModel> {
        self.params.validate()?;
        let weights = check_fit_inputs(features, labels, n_classes, weights)?;
        let n = labels.len();
        let prior = class_distribution(labels, &weights, n_classes);
        let baseline: Vec<f64> = prior.iter().map(|p| p.max(1e-12).ln()).collect();

        let mapper = BinMapper::fit(features, self.params.max_bins);
        let bins = mapper.bin_columns(features);
        let mut offsets = vec![0];
        for f in 0..bins.len() {
            offsets.push(offsets[f] + mapper.n_bins(f));
        }
        let positive = weights.iter().filter(|&&w| w > 0.0).count().max(1);
        let mean_weight = weights.iter().sum::<f64>() / positive as f64;
        let grower = TreeGrower {
            bins: &bins,
            mapper: &mapper,
            offsets,
            params: &self.params,
            min_child_hessian: 1e-3 * mean_weight,
        };

        let mut raw = Array2::zeros((n, n_classes));
        for mut row in raw.outer_iter_mut() {
            row.assign(&ndarray::ArrayView1::from(&baseline));
        }
        let mut trees = Vec::with_capacity(self.params.n_rounds);
        let mut train_loss = Vec::with_capacity(self.params.n_rounds);
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        for _ in 0..self.params.n_rounds {
            let mut proba = raw.clone();
            softmax_rows(&mut proba);
            let mut round = Vec::with_capacity(n_classes);
            // for two classes the class-0 gradients are the exact negation of
            // the class-1 ones, so its tree is the mirrored class-1 tree
            let grown = if n_classes == 2 { 1 } else { n_classes };
            for k in (0..n_classes).rev().take(grown) {
                for i in 0..n {
                    let p = proba[[i, k]];
                    let target = if labels[i] == k { 1.0 } else { 0.0 };
                    g[i] = weights[i] * (p - target);
                    h[i] = weights[i] * p * (1.0 - p);
                }
                let (tree, contribution) = grower.grow(&g, &h, n);
                for i in 0..n {
                    raw[[i, k]] += contribution[i];
                }
                if n_classes == 2 {
                    for i in 0..n {
                        raw[[i, 0]] -= contribution[i];
                    }
                    round.push(tree.negated());
                }
                round.push(tree);
            }
            if n_classes != 2 {
                round.reverse();
            }
            trees.push(round);
            let mut proba = raw.clone();
            softmax_rows(&mut proba);
            train_loss.push(weighted_log_loss(&proba, labels, &weights));
        }
        Ok(GbtModel {
            n_classes,
            n_features: features.ncols(),
            baseline,
            trees,
            train_loss,
        })
    }
}
