//! Invariants of the shift injectors on random data.

use biquality::corruption::{
    inject_class_conditional_shift, inject_concept_drift, ClassConditionalSpec, ConceptDriftSpec,
};
use biquality::data::Dataset;
use ndarray::Array2;
use proptest::prelude::*;

fn dataset(values: &[(f64, f64, usize)], k: usize) -> Dataset {
    let x = Array2::from_shape_fn((values.len(), 2), |(i, j)| if j == 0 { values[i].0 } else { values[i].1 });
    let y = values.iter().map(|v| v.2 % k).collect();
    Dataset::from_parts(x, y, k).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn drift_flips_exactly_the_selected_rows(
        pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, 0usize..3), 60..200),
        r in 0.0f64..1.0,
        k in 2usize..4,
        seed in 0u64..1000,
    ) {
        let d = dataset(&pts, k);
        let spec = ConceptDriftSpec::new(r, k, seed).unwrap();
        let (out, audit) = inject_concept_drift(&d, &spec).unwrap();
        let n = d.n_samples() as f64;
        let mut flipped = vec![false; d.n_samples()];
        for &i in &audit.flipped_indices {
            flipped[i] = true;
            prop_assert_eq!(out.labels()[i], spec.permutation.apply(d.labels()[i]));
        }
        for i in 0..d.n_samples() {
            if !flipped[i] {
                prop_assert_eq!(out.labels()[i], d.labels()[i]);
            }
            prop_assert_eq!(out.row(i), d.row(i));
        }
        prop_assert!(audit.realized_noise_fraction >= r);
        if let Some(&last) = audit.leaf_sizes.last() {
            prop_assert!(audit.realized_noise_fraction - r < last as f64 / n);
        }
        prop_assert_eq!(audit.leaf_sizes.iter().sum::<usize>(), audit.flipped_indices.len());
    }

    #[test]
    fn subsampling_only_removes_rows(
        pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, 0usize..2), 40..120),
        seed in 0u64..1000,
    ) {
        let d = dataset(&pts, 2);
        let mut last = 1.0;
        for rho in [1.0, 2.0, 5.0, 20.0, f64::INFINITY] {
            let spec = ClassConditionalSpec::new(rho, seed).unwrap();
            let (out, audit) = inject_class_conditional_shift(&d, &spec).unwrap();
            prop_assert_eq!(out.n_samples(), audit.kept_indices.len());
            for (j, &i) in audit.kept_indices.iter().enumerate() {
                prop_assert_eq!(out.row(j), d.row(i));
                prop_assert_eq!(out.labels()[j], d.labels()[i]);
            }
            prop_assert!(audit.kept_fraction <= last);
            last = audit.kept_fraction;
        }
    }
}
