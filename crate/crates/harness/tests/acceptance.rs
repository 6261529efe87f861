//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use biquality::biquality::{
    irbl2_weights_from_models, kpdr_weights_from_models, ReweightingMethod, TableClassifier, TrainOptions,
};
use biquality::corruption::{
    inject_class_conditional_shift, inject_concept_drift, ClassConditionalSpec, ConceptDriftSpec,
};
use biquality::data::{make_two_moons, Dataset};
use biquality::density_ratio::{kmm_objective, kmm_weights, rbf_kernel, KmmParams};
use biquality::evalstat::{
    cohens_kappa, friedman_nemenyi, wilcoxon_exact_p, wilcoxon_signed_rank, ConfusionMatrix,
};
use biquality::learners::{fit_isotonic, Classifier, GbtLearner, GbtParams};
use biquality_harness::config::{DatasetSource, ExperimentConfig, GridLayout, MethodEntry, MoonsSpec};
use biquality_harness::record::RunRecord;
use biquality_harness::runner::{cell_seed, corrupt_cell, evaluate_method, prepare_dataset, split_trusted};
use biquality_harness::run_experiment;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ---------------------------------------------------------------- criteria 1, 2

/// Random joint tables `P_T`, `P_U` over 3 feature points x 3 classes.
struct World {
    p_t: Array2<f64>,
    p_u: Array2<f64>,
    trusted_counts: Vec<usize>,
}

impl World {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut table = || {
            let v: Vec<f64> = (0..9).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = v.iter().sum();
            Array2::from_shape_vec((3, 3), v.into_iter().map(|x| x / s).collect()).unwrap()
        };
        let (p_t, p_u) = (table(), table());
        let trusted_counts = (0..3).map(|_| rng.random_range(1..20)).collect();
        Self { p_t, p_u, trusted_counts }
    }

    /// One untrusted row per (x, y) cell.
    fn untrusted(&self) -> (Array2<f64>, Vec<usize>) {
        let x = Array2::from_shape_fn((9, 1), |(i, _)| (i / 3) as f64);
        (x, (0..9).map(|i| i % 3).collect())
    }

    fn n_t(&self) -> f64 {
        self.trusted_counts.iter().sum::<usize>() as f64
    }

    fn concept(p: &Array2<f64>) -> TableClassifier {
        let mut t = p.clone();
        for mut row in t.outer_iter_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        TableClassifier { table: t }
    }

    /// `P(trusted | x)` for `n_t` trusted and 9 untrusted rows.
    fn source(&self) -> TableClassifier {
        let nt = self.n_t();
        TableClassifier {
            table: Array2::from_shape_fn((3, 2), |(x, s)| {
                let t = nt * self.p_t.row(x).sum();
                let u = 9.0 * self.p_u.row(x).sum();
                if s == 1 {
                    t / (t + u)
                } else {
                    u / (t + u)
                }
            }),
        }
    }

    fn class_source(&self, y: usize) -> TableClassifier {
        let nt = self.n_t();
        TableClassifier {
            table: Array2::from_shape_fn((3, 2), |(x, s)| {
                let t = nt * self.p_t[[x, y]];
                let u = 9.0 * self.p_u[[x, y]];
                if s == 1 {
                    t / (t + u)
                } else {
                    u / (t + u)
                }
            }),
        }
    }
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let w = World::random(&mut rng);
        let (x, y) = w.untrusted();
        let irbl2 = irbl2_weights_from_models(
            &World::concept(&w.p_t),
            &World::concept(&w.p_u),
            &w.source(),
            x.view(),
            &y,
            &w.trusted_counts,
        )
        .map_err(|e| e.to_string())?;
        let models: Vec<TableClassifier> = (0..3).map(|k| w.class_source(k)).collect();
        let refs: Vec<Option<&dyn Classifier>> = models.iter().map(|m| Some(m as &dyn Classifier)).collect();
        let kpdr = kpdr_weights_from_models(&refs, x.view(), &y, &w.trusted_counts).map_err(|e| e.to_string())?;
        for i in 0..9 {
            let truth = w.p_t[[i / 3, i % 3]] / w.p_u[[i / 3, i % 3]];
            worst = worst
                .max((irbl2.weights.values()[i] - truth).abs())
                .max((kpdr.weights.values()[i] - truth).abs());
        }
    }
    check(worst <= 1e-9, format!("100 trials, max |w - P_T/P_U| = {worst:.2e}"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let loss: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..5.0)).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let w = World::random(&mut rng);
        let (x, y) = w.untrusted();
        let out = irbl2_weights_from_models(
            &World::concept(&w.p_t),
            &World::concept(&w.p_u),
            &w.source(),
            x.view(),
            &y,
            &w.trusted_counts,
        )
        .map_err(|e| e.to_string())?;
        let (mut reweighted, mut trusted) = (0.0, 0.0);
        for i in 0..9 {
            reweighted += out.weights.values()[i] * w.p_u[[i / 3, i % 3]] * loss[i];
            trusted += w.p_t[[i / 3, i % 3]] * loss[i];
        }
        worst = worst.max((reweighted - trusted).abs());
    }
    check(worst <= 1e-12, format!("100 trials, max |risk difference| = {worst:.2e}"))
}

// ---------------------------------------------------------------- criterion 3

/// Best nondecreasing fit over all contiguous partitions (x sorted, distinct).
fn isotonic_oracle(y: &[f64], w: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cuts in 0u32..(1 << (n - 1)) {
        let mut fit = vec![0.0; n];
        let mut means = Vec::new();
        let mut start = 0;
        for end in 1..=n {
            if end == n || cuts & (1 << (end - 1)) != 0 {
                let sw: f64 = w[start..end].iter().sum();
                let m = (start..end).map(|i| w[i] * y[i]).sum::<f64>() / sw;
                fit[start..end].iter_mut().for_each(|f| *f = m);
                means.push(m);
                start = end;
            }
        }
        if means.windows(2).any(|p| p[0] > p[1]) {
            continue;
        }
        let sse: f64 = (0..n).map(|i| w[i] * (y[i] - fit[i]).powi(2)).sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, fit));
        }
    }
    best.expect("the single-block partition is always feasible").1
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        // distinct x presented in shuffled order
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let x: Vec<f64> = order.iter().map(|&o| o as f64).collect();
        let fit = fit_isotonic(&x, &y, &w).map_err(|e| e.to_string())?;
        let mut by_x: Vec<usize> = (0..n).collect();
        by_x.sort_by_key(|&i| order[i]);
        let ys: Vec<f64> = by_x.iter().map(|&i| y[i]).collect();
        let ws: Vec<f64> = by_x.iter().map(|&i| w[i]).collect();
        let oracle = isotonic_oracle(&ys, &ws);
        for (j, &i) in by_x.iter().enumerate() {
            worst = worst.max((fit.fitted[i] - oracle[j]).abs());
        }
    }
    check(worst <= 1e-9, format!("200 trials, max deviation from exhaustive fit = {worst:.2e}"))
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4() -> Outcome {
    // untrusted: four points at -1 and four at +1; trusted: four points at +1
    let u = Array2::from_shape_fn((8, 1), |(i, _)| if i < 4 { -1.0 } else { 1.0 });
    let t = Array2::from_elem((4, 1), 1.0);
    let (gamma, upper, eps) = (1.0, 5.0, 0.01);
    let params = KmmParams {
        gamma: Some(gamma),
        upper_bound: upper,
        epsilon: Some(eps),
        ..KmmParams::default()
    };
    let sol = kmm_weights(t.view(), u.view(), &params, 0).map_err(|e| e.to_string())?;
    let beta = sol.weights.values();
    let gram = Array2::from_shape_fn((8, 8), |(i, j)| rbf_kernel(u.row(i), u.row(j), gamma));
    let kappa: Vec<f64> = u
        .outer_iter()
        .map(|x| 2.0 * t.outer_iter().map(|y| rbf_kernel(x, y, gamma)).sum::<f64>())
        .collect();
    let (lo, hi) = (8.0 * (1.0 - eps), 8.0 * (1.0 + eps));

    // dense grid over every (a, b) with a the weight at -1 and b the weight at +1
    let f = |a: f64, b: f64| {
        let v: Vec<f64> = (0..8).map(|i| if i < 4 { a } else { b }).collect();
        kmm_objective(&gram, &kappa, &v)
    };
    let mut oracle = f64::INFINITY;
    let mut best_a = 0.0;
    let steps = 4000;
    for sa in 0..=steps {
        let a = upper * sa as f64 / steps as f64;
        let (b_lo, b_hi) = (((lo - 4.0 * a) / 4.0).max(0.0), ((hi - 4.0 * a) / 4.0).min(upper));
        for sb in 0..=200 {
            let b = b_lo + (b_hi - b_lo) * sb as f64 / 200.0;
            if b_lo <= b_hi && f(a, b) < oracle {
                oracle = f(a, b);
                best_a = a;
            }
        }
    }
    // refine around the best a
    let da = upper / steps as f64;
    for sa in 0..=4000 {
        let a = (best_a - da + 2.0 * da * sa as f64 / 4000.0).clamp(0.0, upper);
        let (b_lo, b_hi) = (((lo - 4.0 * a) / 4.0).max(0.0), ((hi - 4.0 * a) / 4.0).min(upper));
        for sb in 0..=200 {
            let b = b_lo + (b_hi - b_lo) * sb as f64 / 200.0;
            if b_lo <= b_hi {
                oracle = oracle.min(f(a, b));
            }
        }
    }
    let value = kmm_objective(&gram, &kappa, beta);
    let box_ok = beta.iter().all(|&b| (0.0..=upper).contains(&b));
    let sum: f64 = beta.iter().sum();
    let slab_violation = (lo - sum).max(sum - hi).max(0.0);

    let x = Array2::from_shape_fn((12, 2), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.4);
    let same = kmm_weights(x.view(), x.view(), &KmmParams::default(), 3).map_err(|e| e.to_string())?;
    let same_dev = same.weights.values().iter().map(|w| (w - 1.0).abs()).fold(0.0, f64::max);

    check(
        (value - oracle).abs() <= 1e-4 && box_ok && slab_violation <= 1e-6 && same_dev <= 1e-3,
        format!(
            "objective {value:.6} vs grid {oracle:.6}, box {box_ok}, slab violation {slab_violation:.1e}, identical sets max |w-1| {same_dev:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- criterion 5

fn random_dataset(rng: &mut ChaCha8Rng) -> Dataset {
    let n = rng.random_range(100..300);
    let k = rng.random_range(2..=3);
    let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-3.0..3.0));
    let mut y: Vec<usize> = (0..n).map(|i| i % k).collect();
    // labels follow a noisy linear rule so the tree has structure to find
    for (i, yi) in y.iter_mut().enumerate() {
        if rng.random_range(0.0..1.0) < 0.7 {
            *yi = usize::from(x[[i, 0]] + x[[i, 1]] > 0.0) % k;
        }
    }
    Dataset::from_parts(x, y, k).unwrap()
}

fn four_blob_classes(rng: &mut ChaCha8Rng) -> Dataset {
    let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (10.0, 10.0)];
    let sizes = [400, 300, 200, 100];
    let mut v = Vec::new();
    let mut y = Vec::new();
    for class in 0..2 {
        for (&(cx, cy), &s) in centers.iter().zip(&sizes) {
            for _ in 0..s {
                v.push(cx + 40.0 * class as f64 + rng.random_range(-0.5..0.5));
                v.push(cy + rng.random_range(-0.5..0.5));
                y.push(class);
            }
        }
    }
    Dataset::from_parts(Array2::from_shape_vec((2000, 2), v).unwrap(), y, 2).unwrap()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut notes = Vec::new();
    for trial in 0..10 {
        let d = random_dataset(&mut rng);
        let r = rng.random_range(0.05..0.6);
        let spec = ConceptDriftSpec::new(r, d.n_classes(), trial).map_err(|e| e.to_string())?;
        let (out, audit) = inject_concept_drift(&d, &spec).map_err(|e| e.to_string())?;
        let n = d.n_samples() as f64;
        let max_leaf = audit.leaf_sizes.iter().copied().max().unwrap_or(0) as f64 / n;
        if !(audit.realized_noise_fraction >= r && audit.realized_noise_fraction < r + max_leaf) {
            return Err(format!("dataset {trial}: r {r:.3}, realized {:.3}", audit.realized_noise_fraction));
        }
        let mut flipped = vec![false; d.n_samples()];
        for &i in &audit.flipped_indices {
            flipped[i] = true;
        }
        for i in 0..d.n_samples() {
            let expected = if flipped[i] { spec.permutation.apply(d.labels()[i]) } else { d.labels()[i] };
            if out.labels()[i] != expected {
                return Err(format!("dataset {trial}: row {i} label does not match the permutation"));
            }
        }
    }
    notes.push("10 drift datasets within [r, r + max leaf mass), flips match the permutation".to_string());

    let d = four_blob_classes(&mut rng);
    let (_, audit) = inject_class_conditional_shift(&d, &ClassConditionalSpec::new(10.0, 7).unwrap())
        .map_err(|e| e.to_string())?;
    if audit.kept_fraction != 0.73 {
        return Err(format!("[400,300,200,100] at rho=10 kept {}", audit.kept_fraction));
    }
    notes.push("kept 0.73 at rho=10".to_string());
    let mut last = f64::INFINITY;
    for rho in [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0] {
        let (_, a) = inject_class_conditional_shift(&d, &ClassConditionalSpec::new(rho, 7).unwrap())
            .map_err(|e| e.to_string())?;
        if rho == 1.0 && a.kept_fraction != 1.0 {
            return Err(format!("kept {} at rho=1", a.kept_fraction));
        }
        if a.kept_fraction > last {
            return Err(format!("kept_fraction increased at rho={rho}"));
        }
        last = a.kept_fraction;
    }
    notes.push("1.0 at rho=1, nonincreasing to rho=100".to_string());
    Ok(notes.join("; "))
}

// ---------------------------------------------------------------- criterion 6

fn enumerated_p(diffs: &[f64]) -> f64 {
    let n = diffs.len();
    // average ranks of |d|, computed independently of the library
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks: Vec<f64> = abs
        .iter()
        .map(|&a| {
            let below = abs.iter().filter(|&&b| b < a).count() as f64;
            let equal = abs.iter().filter(|&&b| b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let (mut le, mut ge) = (0u64, 0u64);
    for signs in 0u32..(1 << n) {
        let w: f64 = (0..n).filter(|&i| signs & (1 << i) != 0).map(|i| ranks[i]).sum();
        if w <= observed + 1e-9 {
            le += 1;
        }
        if w >= observed - 1e-9 {
            ge += 1;
        }
    }
    (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0)
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.random_range(1..=12);
        // small integer differences produce ties in |d|; zeros are excluded
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..10) as f64).collect();
        let b: Vec<f64> = a
            .iter()
            .map(|&x| {
                let step = rng.random_range(1..=4) as f64;
                if rng.random_range(0.0..1.0) < 0.5 {
                    x + step
                } else {
                    x - step
                }
            })
            .collect();
        let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let oracle = enumerated_p(&diffs);
        let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
        let ranks: Vec<f64> = abs
            .iter()
            .map(|&v| abs.iter().filter(|&&u| u < v).count() as f64 + (abs.iter().filter(|&&u| u == v).count() as f64 + 1.0) / 2.0)
            .collect();
        let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
        worst = worst.max((wilcoxon_exact_p(&ranks, w_plus) - oracle).abs());
        if n >= 5 {
            let test = wilcoxon_signed_rank(&a, &b, 0.05).map_err(|e| e.to_string())?;
            worst = worst.max((test.p_value - oracle).abs());
        }
    }
    let cm = ConfusionMatrix::from_counts(vec![vec![45, 5], vec![10, 40]]).unwrap();
    let kappa = cohens_kappa(&cm).map_err(|e| e.to_string())?;
    // CD depends only on k and N: any 7 x 36 score matrix will do
    let scores: Vec<Vec<f64>> = (0..7).map(|m| (0..36).map(|d| ((m * 5 + d * 3) % 11) as f64).collect()).collect();
    let cd = friedman_nemenyi(&scores, 0.05).map_err(|e| e.to_string())?.critical_difference;
    check(
        worst <= 1e-12 && (kappa - 0.7).abs() <= 1e-12 && (cd - 1.501).abs() <= 0.01,
        format!("500 cases max |p - enumeration| = {worst:.1e}; kappa = {kappa}; CD(7, 36) = {cd:.4}"),
    )
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7() -> Outcome {
    let learner = GbtLearner::new(GbtParams::default());
    let methods = [
        ReweightingMethod::NoCorrection,
        ReweightingMethod::Irbl,
        ReweightingMethod::Irbl2,
        ReweightingMethod::KPdr,
    ];
    let mut kappas = vec![vec![Vec::new(); methods.len()]; 2];
    for (regime, (r, rho)) in [(0.5, 1.0), (0.0, 100.0)].into_iter().enumerate() {
        for seed in 0..10u64 {
            let d = make_two_moons(2500, 0.1, seed).map_err(|e| e.to_string())?;
            let prep = prepare_dataset("two_moons", &d, 0.2).map_err(|e| e.to_string())?;
            let biq = split_trusted(&prep, 0.05, 0.05, seed).map_err(|e| e.to_string())?;
            let cs = cell_seed("two_moons", 0.05, r, rho, seed);
            let (cell, _) = corrupt_cell(&biq, &prep.derangement, r, rho, cs).map_err(|e| e.to_string())?;
            let options = TrainOptions {
                calibration_folds: 3,
                seed: cs,
            };
            for (m, method) in methods.iter().enumerate() {
                let (k, _) = evaluate_method(&cell, &prep.test, method, &learner, &options).map_err(|e| e.to_string())?;
                kappas[regime][m].push(k);
            }
        }
    }
    let gain = |regime: usize, m: usize| {
        median(kappas[regime][m].iter().zip(&kappas[regime][0]).map(|(a, b)| a - b).collect())
    };
    let (irbl, irbl2) = (gain(0, 1), gain(0, 2));
    let (kpdr, nocorr) = (median(kappas[1][3].clone()), median(kappas[1][0].clone()));
    check(
        irbl >= 0.15 && irbl2 >= 0.15 && kpdr >= nocorr,
        format!(
            "r=0.5 median gain over NoCorrection: IRBL {irbl:+.3}, IRBL2 {irbl2:+.3}; rho=100 median kappa K-PDR {kpdr:.3} vs NoCorrection {nocorr:.3}"
        ),
    )
}

// ---------------------------------------------------------------- criteria 8, 9

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn mean_kappa(records: &[RunRecord], method: &str) -> f64 {
    let v: Vec<f64> = records.iter().filter(|r| r.method == method).filter_map(|r| r.kappa).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_8(out: &Path) -> Outcome {
    let path = crate_dir().join("configs/desk_scale.toml");
    let mut cfg = ExperimentConfig::load(&path).map_err(|e| e.to_string())?;
    cfg.output_dir = out.to_path_buf();
    let report = run_experiment(&cfg, path.parent().unwrap()).map_err(|e| e.to_string())?;
    if !report.is_complete() {
        return Err(format!("{} runs failed", report.failures.len()));
    }
    let m = |name| mean_kappa(&report.records, name);
    let (irbl, nocorr, kpdr, pdr) = (m("IRBL"), m("NoCorrection"), m("K-PDR"), m("PDR"));
    check(
        irbl >= nocorr && kpdr >= pdr,
        format!(
            "{} runs on 3 datasets, p=0.5: IRBL {irbl:.3} vs NoCorrection {nocorr:.3}; K-PDR {kpdr:.3} vs PDR {pdr:.3}",
            report.records.len()
        ),
    )
}

fn without_timing(path: &Path) -> Result<String, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let header: Vec<&str> = text.lines().next().unwrap_or("").split(',').collect();
    let col = header.iter().position(|h| *h == "wall_time").ok_or("no wall_time column")?;
    Ok(text
        .lines()
        .map(|l| {
            let mut fields: Vec<&str> = l.split(',').collect();
            fields.remove(col);
            fields.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n"))
}

fn criterion_9(out: &Path) -> Outcome {
    let mut cfg = ExperimentConfig::with_datasets(vec![
        DatasetSource::TwoMoons {
            name: Some("moons".into()),
            two_moons: MoonsSpec {
                n: 400,
                noise_sd: 0.15,
                seed: 9,
            },
        },
        DatasetSource::Csv {
            name: None,
            path: "data/wine.csv".into(),
            label_column: "target".into(),
        },
    ]);
    cfg.p_values = vec![0.5];
    cfg.r_grid = vec![0.0, 0.3];
    cfg.rho_grid = vec![1.0, 5.0];
    cfg.grid = GridLayout::Full;
    cfg.seeds = vec![0, 1];
    cfg.methods = ReweightingMethod::NAMES.iter().map(|n| MethodEntry::Name(n.to_string())).collect();
    cfg.learner.n_rounds = 30;
    let mut texts = Vec::new();
    for (run, threads) in [(0, 1), (1, 2)] {
        cfg.output_dir = out.join(format!("run{run}"));
        cfg.parallelism = threads;
        let report = run_experiment(&cfg, &crate_dir()).map_err(|e| e.to_string())?;
        if !report.is_complete() {
            return Err(format!("{} runs failed", report.failures.len()));
        }
        let mut joined = String::new();
        for d in ["moons", "wine"] {
            joined += &without_timing(&cfg.output_dir.join(d).join("runs.csv"))?;
        }
        texts.push(joined);
    }
    let rows = texts[0].lines().count();
    check(
        texts[0] == texts[1],
        format!("two runs (1 and 2 threads), {rows} CSV lines, identical apart from wall_time"),
    )
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<(&str, Duration, Box<dyn Fn() -> Outcome>)> = vec![
        ("oracle joint-ratio equivalence", Duration::from_secs(1), Box::new(criterion_1)),
        ("reweighted-risk identity", Duration::from_secs(1), Box::new(criterion_2)),
        ("PAVA vs exhaustive oracle", Duration::MAX, Box::new(criterion_3)),
        ("KMM toy and identical sets", Duration::MAX, Box::new(criterion_4)),
        ("corruption generators", Duration::MAX, Box::new(criterion_5)),
        ("rank statistics", Duration::MAX, Box::new(criterion_6)),
        ("two-moons end to end", Duration::from_secs(120), Box::new(criterion_7)),
        ("desk-scale ordering", Duration::from_secs(1800), {
            let out = tmp.path().join("desk");
            Box::new(move || criterion_8(&out))
        }),
        ("determinism", Duration::MAX, {
            let out = tmp.path().join("determinism");
            Box::new(move || criterion_9(&out))
        }),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if elapsed <= *budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over the {budget:?} budget")),
            Err(d) => ("FAIL", d),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {}: {status} {name} ({detail}) [{:.1}s]", i + 1, elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
