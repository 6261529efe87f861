//! Predictive metrics and paired comparison tests.


use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use rank_tests::{
    friedman_nemenyi, studentized_range_q, wilcoxon_exact_p, wilcoxon_signed_rank, Decision,
    FriedmanNemenyi, Outcome, RankTestResult, TestFlag,
};

/// `K x K` counts with rows indexed by the true class and columns by the
/// predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(invalid("confusion matrix must be square and non-empty"));
        }
        Ok(Self { counts })
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(invalid("truth and predictions differ in length"));
        }
        let mut counts = vec![vec![0u64; n_classes]; n_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= n_classes || p >= n_classes {
                return Err(invalid("class id outside [0, K)"));
            }
            counts[t][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(invalid("empty confusion matrix"));
        }
        let diag: u64 = (0..self.n_classes()).map(|k| self.counts[k][k]).sum();
        Ok(diag as f64 / total as f64)
    }
}

/// Cohen's kappa. A matrix whose chance agreement is exactly one yields 0.
pub fn cohens_kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(invalid("empty confusion matrix"));
    }
    let n = total as f64;
    let k = cm.n_classes();
    let p_o = cm.accuracy()?;
    let p_e: f64 = (0..k)
        .map(|c| {
            let row: u64 = cm.counts[c].iter().sum();
            let col: u64 = cm.counts.iter().map(|r| r[c]).sum();
            (row as f64 / n) * (col as f64 / n)
        })
        .sum();
    if (1.0 - p_e).abs() <= f64::EPSILON {
        return Ok(0.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Kappa of hard predictions against the truth.
pub fn kappa_score(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<f64> {
    cohens_kappa(&ConfusionMatrix::from_predictions(truth, predicted, n_classes)?)
}

/// Trapezoidal area under `(strength, metric)` points divided by the strength
/// range. Strengths must be strictly increasing.
pub fn normalized_auc(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(invalid("AUC needs at least two points"));
    }
    if points.iter().any(|(s, m)| !s.is_finite() || !m.is_finite()) {
        return Err(invalid("AUC points must be finite"));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(invalid("AUC strengths must be strictly increasing"));
    }
    let area: f64 = points
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum();
    Ok(area / (points[points.len() - 1].0 - points[0].0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl CurveSummary {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let auc = normalized_auc(&points)?;
        Ok(Self { points, auc })
    }
}

impl TryFrom<Vec<(f64, f64)>> for CurveSummary {
    type Error = Error;

    fn try_from(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(points)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn cm(rows: &[&[u64]]) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(cohens_kappa(&cm(&[&[5, 0, 0], &[0, 3, 0], &[0, 0, 9]])).unwrap(), 1.0);
        assert!((cohens_kappa(&cm(&[&[45, 5], &[10, 40]])).unwrap() - 0.7).abs() <= 1e-12);
        // outer product of marginals (0.4, 0.6) x (0.3, 0.7), scaled by 100
        assert!(cohens_kappa(&cm(&[&[12, 28], &[18, 42]])).unwrap().abs() <= 1e-12);
        assert_eq!(cohens_kappa(&cm(&[&[7, 0], &[0, 0]])).unwrap(), 0.0);
        assert!(cohens_kappa(&cm(&[&[0, 0], &[0, 0]])).is_err());
    }

    #[test]
    fn predictions_fill_the_matrix() {
        let m = ConfusionMatrix::from_predictions(&[0, 1, 1, 2], &[0, 1, 2, 2], 3).unwrap();
        assert_eq!(m.counts(), &[vec![1, 0, 0], vec![0, 1, 1], vec![0, 0, 1]]);
        assert_eq!(m.total(), 4);
        assert!(ConfusionMatrix::from_predictions(&[0], &[3], 3).is_err());
    }

    #[test]
    fn auc_examples() {
        assert!((normalized_auc(&[(0.0, 0.4), (0.3, 0.4), (1.0, 0.4)]).unwrap() - 0.4).abs() <= 1e-15);
        assert_eq!(normalized_auc(&[(0.0, 0.0), (1.0, 1.0)]).unwrap(), 0.5);
        let v = normalized_auc(&[(0.0, 0.8), (0.25, 0.6), (0.5, 0.5)]).unwrap();
        assert!((v - 0.625).abs() <= 1e-12);
        assert!(normalized_auc(&[(0.0, 1.0)]).is_err());
        assert!(normalized_auc(&[(0.0, 1.0), (0.0, 2.0)]).is_err());
    }

    proptest! {
        #[test]
        fn kappa_invariant_under_class_relabeling(
            counts in prop::collection::vec(0u64..30, 9),
            perm_seed in 0usize..6,
        ) {
            prop_assume!(counts.iter().sum::<u64>() > 0);
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let p = perms[perm_seed];
            let rows: Vec<Vec<u64>> = (0..3).map(|i| counts[i * 3..i * 3 + 3].to_vec()).collect();
            let permuted: Vec<Vec<u64>> =
                (0..3).map(|i| (0..3).map(|j| rows[p[i]][p[j]]).collect()).collect();
            let a = cohens_kappa(&ConfusionMatrix::from_counts(rows).unwrap()).unwrap();
            let b = cohens_kappa(&ConfusionMatrix::from_counts(permuted).unwrap()).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&a));
        }

        #[test]
        fn auc_of_mirrored_curve_is_equal(
            steps in prop::collection::vec((0.01f64..1.0, -1.0f64..1.0), 2..10)
        ) {
            let mut s = 0.0;
            let points: Vec<(f64, f64)> = steps.iter().map(|&(d, m)| { s += d; (s, m) }).collect();
            let (lo, hi) = (points[0].0, points[points.len() - 1].0);
            let mirrored: Vec<(f64, f64)> =
                points.iter().rev().map(|&(x, m)| (lo + hi - x, m)).collect();
            let a = normalized_auc(&points).unwrap();
            let b = normalized_auc(&mirrored).unwrap();
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }
}
