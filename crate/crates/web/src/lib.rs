//! Browser bindings: corrupt a two-moons sample, show one method's weights,
//! or compare every method's test kappa. Each operation returns an SVG or
//! JSON string.

use biquality::biquality::{compute_weights, train_with_method, ReweightingMethod, TrainOptions};
use biquality::corruption::{
    inject_class_conditional_shift, inject_concept_drift, ClassConditionalSpec, ConceptDriftSpec,
};
use biquality::data::{make_two_moons, stratified_split, BiqualityDataset, Dataset};
use biquality::derive_seed;
use biquality::evalstat::kappa_score;
use biquality::learners::{Classifier, GbtLearner, GbtParams};
use biquality::plot::{scatter_svg, toy_weights_svg};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Boosting rounds used in the browser; fewer than the library default to
/// keep the page responsive.
const ROUNDS: usize = 40;

fn learner() -> GbtLearner {
    GbtLearner::new(GbtParams {
        n_rounds: ROUNDS,
        ..GbtParams::default()
    })
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Corrupts `d`: concept drift at `r`, then subsampling at `rho`.
/// Returns the corrupted data and, per kept row, whether its label was flipped.
fn corrupt(d: &Dataset, r: f64, rho: f64, seed: u64) -> Result<(Dataset, Vec<bool>), String> {
    let mut out = d.clone();
    let mut flipped = vec![false; d.n_samples()];
    if r > 0.0 {
        let spec = ConceptDriftSpec::new(r, d.n_classes(), derive_seed(seed, 1)).map_err(err)?;
        let (next, audit) = inject_concept_drift(&out, &spec).map_err(err)?;
        for i in audit.flipped_indices {
            flipped[i] = true;
        }
        out = next;
    }
    if rho > 1.0 {
        let spec = ClassConditionalSpec::new(rho, derive_seed(seed, 2)).map_err(err)?;
        let (next, audit) = inject_class_conditional_shift(&out, &spec).map_err(err)?;
        flipped = audit.kept_indices.iter().map(|&i| flipped[i]).collect();
        out = next;
    }
    Ok((out, flipped))
}

/// Trusted part, corrupted untrusted part and clean test set.
fn scenario(n: usize, trusted: f64, r: f64, rho: f64, seed: u64) -> Result<(BiqualityDataset, Dataset), String> {
    let d = make_two_moons(n, 0.1, seed).map_err(err)?;
    let (test, train) = stratified_split(&d, 0.2, derive_seed(seed, 10)).map_err(err)?;
    let (t, u) = stratified_split(&train, trusted, derive_seed(seed, 11)).map_err(err)?;
    let (u, _) = corrupt(&u, r, rho, seed)?;
    Ok((BiqualityDataset::new(t, u).map_err(err)?, test))
}

/// Scatter plot of a corrupted two-moons sample; flipped rows are outlined.
pub fn corruption_svg(n: usize, r: f64, rho: f64, seed: u64) -> Result<String, String> {
    let d = make_two_moons(n, 0.1, seed).map_err(err)?;
    let (out, flipped) = corrupt(&d, r, rho, seed)?;
    scatter_svg(&out, Some(&flipped)).map_err(err)
}

/// Trusted squares and untrusted circles sized by `method`'s weights.
pub fn weights_svg(method: &str, n: usize, trusted: f64, r: f64, rho: f64, seed: u64) -> Result<String, String> {
    let method: ReweightingMethod = method.parse().map_err(err)?;
    let (biq, _) = scenario(n, trusted, r, rho, seed)?;
    let options = TrainOptions {
        calibration_folds: 3,
        seed,
    };
    let outcome = compute_weights(&biq, &method, &learner(), &options).map_err(err)?;
    toy_weights_svg(&biq.trusted, &biq.untrusted, outcome.weights.values()).map_err(err)
}

/// JSON list of `{method, kappa}` for every method on one scenario.
pub fn comparison_json(n: usize, trusted: f64, r: f64, rho: f64, seed: u64) -> Result<String, String> {
    let (biq, test) = scenario(n, trusted, r, rho, seed)?;
    let options = TrainOptions {
        calibration_folds: 3,
        seed,
    };
    let learner = learner();
    let mut rows = Vec::new();
    for method in ReweightingMethod::all() {
        let model = train_with_method(&biq, &method, &learner, &options).map_err(err)?.model;
        let predicted = model.predict(test.features());
        let kappa = kappa_score(test.labels(), &predicted, test.n_classes()).map_err(err)?;
        rows.push(json!({"method": method.name(), "kappa": kappa}));
    }
    Ok(serde_json::Value::Array(rows).to_string())
}

#[wasm_bindgen]
pub fn render_corruption(n: usize, r: f64, rho: f64, seed: u32) -> Result<String, JsError> {
    corruption_svg(n, r, rho, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn render_weights(method: &str, n: usize, trusted: f64, r: f64, rho: f64, seed: u32) -> Result<String, JsError> {
    weights_svg(method, n, trusted, r, rho, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn compare_methods(n: usize, trusted: f64, r: f64, rho: f64, seed: u32) -> Result<String, JsError> {
    comparison_json(n, trusted, r, rho, u64::from(seed)).map_err(|e| JsError::new(&e))
}
