//! Grid execution: splits, corruption, method runs and resumable records.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use biquality::biquality::{train_with_method, ReweightingMethod, TrainOptions};
use biquality::corruption::{
    inject_class_conditional_shift, inject_concept_drift, ClassConditionalSpec, ConceptDriftSpec, CorruptionFlag,
    Derangement,
};
use biquality::data::{
    calibrate_trusted_ratio, stratified_split_indices, BiqualityDataset, Dataset, TrustedRatio,
};
use biquality::derive_seed;
use biquality::evalstat::kappa_score;
use biquality::learners::{Classifier, GbtLearner};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::record::{read_records_dedup, write_records_atomic, RecordAppender, RunKey, RunRecord};
use crate::{HarnessError, Result};

/// Largest trusted share of the training split; keeps the untrusted part non-empty.
pub const MAX_TRUSTED_FRACTION: f64 = 0.9;

/// First eight bytes of the SHA-256 of `text`, little endian.
pub fn hash_seed(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn dataset_seed(dataset: &str) -> u64 {
    hash_seed(&format!("dataset|{dataset}"))
}

/// Seed shared by every method run on one grid cell.
pub fn cell_seed(dataset: &str, p: f64, r: f64, rho: f64, seed: u64) -> u64 {
    hash_seed(&format!("cell|{dataset}|{p}|{r}|{rho}|{seed}"))
}

fn trusted_split_seed(dataset: &str, p: f64, seed: u64) -> u64 {
    hash_seed(&format!("trusted|{dataset}|{p}|{seed}"))
}

/// A dataset after the train/test split, with the state shared by its cells.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub name: String,
    pub train: Dataset,
    pub test: Dataset,
    /// Rows of the loaded dataset in each part.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub derangement: Derangement,
}

pub fn prepare_dataset(name: &str, d: &Dataset, test_fraction: f64) -> Result<PreparedDataset> {
    let seed = dataset_seed(name);
    let (test_indices, train_indices) = stratified_split_indices(d.labels(), d.n_classes(), test_fraction, seed)?;
    Ok(PreparedDataset {
        name: name.to_string(),
        train: d.subset(&train_indices),
        test: d.subset(&test_indices),
        train_indices,
        test_indices,
        derangement: Derangement::random(d.n_classes(), derive_seed(seed, 1))?,
    })
}

/// Trusted and untrusted parts of the training split for one `(p, seed)`.
pub fn split_trusted(prepared: &PreparedDataset, p: f64, fraction: f64, seed: u64) -> Result<BiqualityDataset> {
    let fraction = fraction.min(MAX_TRUSTED_FRACTION);
    let train = &prepared.train;
    let (t, u) = stratified_split_indices(
        train.labels(),
        train.n_classes(),
        fraction,
        trusted_split_seed(&prepared.name, p, seed),
    )?;
    Ok(BiqualityDataset::new(train.subset(&t), train.subset(&u))?)
}

fn corruption_flag_text(flag: &CorruptionFlag) -> String {
    match flag {
        CorruptionFlag::DegenerateTree => "degenerate_tree".into(),
        CorruptionFlag::ClassTooSmall { class } => format!("class_too_small_{class}"),
    }
}

/// Corrupts the untrusted part only: concept drift first, then class-conditional
/// subsampling. Returns the corrupted set and corruption flags.
pub fn corrupt_cell(
    biq: &BiqualityDataset,
    derangement: &Derangement,
    r: f64,
    rho: f64,
    seed: u64,
) -> Result<(BiqualityDataset, Vec<String>)> {
    let mut untrusted = biq.untrusted.clone();
    let mut flags = Vec::new();
    if r > 0.0 {
        let mut spec = ConceptDriftSpec::new(r, untrusted.n_classes(), derive_seed(seed, 1))?;
        spec.permutation = derangement.clone();
        let (d, audit) = inject_concept_drift(&untrusted, &spec)?;
        untrusted = d;
        flags.extend(audit.flags.iter().map(corruption_flag_text));
    }
    if rho > 1.0 {
        let spec = ClassConditionalSpec::new(rho, derive_seed(seed, 2))?;
        let (d, audit) = inject_class_conditional_shift(&untrusted, &spec)?;
        untrusted = d;
        flags.extend(audit.flags.iter().map(corruption_flag_text));
    }
    Ok((BiqualityDataset::new(biq.trusted.clone(), untrusted)?, flags))
}

/// Trains `method` on the corrupted cell and scores it on the clean test set.
pub fn evaluate_method(
    biq: &BiqualityDataset,
    test: &Dataset,
    method: &ReweightingMethod,
    learner: &GbtLearner,
    options: &TrainOptions,
) -> Result<(f64, Vec<String>)> {
    let trained = train_with_method(biq, method, learner, options)?;
    let predicted = trained.model.predict(test.features());
    let kappa = kappa_score(test.labels(), &predicted, test.n_classes())?;
    let flags = trained
        .weights
        .map(|w| w.flags.iter().map(ToString::to_string).collect())
        .unwrap_or_default();
    Ok((kappa, flags))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub dataset: String,
    pub method: String,
    pub p: f64,
    pub r: f64,
    pub rho: f64,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub output_dir: PathBuf,
    /// Every record on disk after the run, in canonical order.
    pub records: Vec<RunRecord>,
    pub failures: Vec<Failure>,
    pub executed: usize,
    pub skipped: usize,
}

impl RunReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Stop after this many cells, as if interrupted.
    pub cell_limit: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RatioCache {
    fingerprint: String,
    ratios: BTreeMap<String, TrustedRatio>,
}

fn ratio_fingerprint(config: &ExperimentConfig) -> Result<String> {
    Ok(serde_json::to_string(&(&config.learner, &config.ratio_grid, config.test_fraction))?)
}

/// Trusted fraction per p, from the config or the learning curve (cached).
fn trusted_fractions(config: &ExperimentConfig, prepared: &PreparedDataset, dir: &Path) -> Result<Vec<(f64, bool)>> {
    if let Some(t) = config.trusted_ratio {
        return Ok(config.p_values.iter().map(|_| (t, true)).collect());
    }
    let path = dir.join("trusted_ratios.json");
    let fingerprint = ratio_fingerprint(config)?;
    let mut cache: RatioCache = fs::read_to_string(&path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .filter(|c: &RatioCache| c.fingerprint == fingerprint)
        .unwrap_or_else(|| RatioCache {
            fingerprint,
            ratios: BTreeMap::new(),
        });
    let learner = GbtLearner::new(config.learner);
    let mut out = Vec::new();
    let mut dirty = false;
    for &p in &config.p_values {
        let key = p.to_string();
        if !cache.ratios.contains_key(&key) {
            let seed = derive_seed(dataset_seed(&prepared.name), 2);
            let ratio = calibrate_trusted_ratio(&prepared.train, p, &learner, &config.ratio_grid, seed)?;
            log::info!("{}: p = {p} -> trusted ratio {}", prepared.name, ratio.ratio);
            cache.ratios.insert(key.clone(), ratio);
            dirty = true;
        }
        let r = &cache.ratios[&key];
        out.push((r.ratio, r.reached));
    }
    if dirty {
        let text = serde_json::to_string_pretty(&cache)?;
        fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    }
    Ok(out)
}

struct Cell {
    dataset: usize,
    p_index: usize,
    seed: u64,
    r: f64,
    rho: f64,
    methods: Vec<usize>,
}

/// Runs the full grid of `config`; relative dataset paths resolve against `base_dir`.
pub fn run_experiment(config: &ExperimentConfig, base_dir: &Path) -> Result<RunReport> {
    run_experiment_with(config, base_dir, &RunOptions::default())
}

pub fn run_experiment_with(config: &ExperimentConfig, base_dir: &Path, options: &RunOptions) -> Result<RunReport> {
    config.validate()?;
    let methods = config.methods()?;
    let output_dir = config.resolved_output_dir();
    fs::create_dir_all(&output_dir).map_err(|e| HarnessError::io(&output_dir, e))?;

    let mut prepared = Vec::new();
    let mut fractions = Vec::new();
    let mut done: HashSet<RunKey> = HashSet::new();
    for source in &config.datasets {
        let name = source.name();
        let d = source.load(base_dir)?;
        let prep = prepare_dataset(&name, &d, config.test_fraction)?;
        let dir = output_dir.join(&name);
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        fractions.push(trusted_fractions(config, &prep, &dir)?);
        let runs = dir.join("runs.csv");
        if runs.exists() {
            done.extend(read_records_dedup(&runs)?.iter().filter(|r| !r.failed()).map(RunRecord::key));
        }
        prepared.push(prep);
    }

    let mut cells = Vec::new();
    let mut skipped = 0;
    for (di, prep) in prepared.iter().enumerate() {
        for (pi, &p) in config.p_values.iter().enumerate() {
            for &seed in &config.seeds {
                for (r, rho) in config.cells() {
                    let pending: Vec<usize> = (0..methods.len())
                        .filter(|&m| !done.contains(&RunKey::new(&prep.name, methods[m].name(), p, r, rho, seed)))
                        .collect();
                    skipped += methods.len() - pending.len();
                    if !pending.is_empty() {
                        cells.push(Cell {
                            dataset: di,
                            p_index: pi,
                            seed,
                            r,
                            rho,
                            methods: pending,
                        });
                    }
                }
            }
        }
    }
    if let Some(limit) = options.cell_limit {
        cells.truncate(limit);
    }

    let appenders = prepared
        .iter()
        .map(|p| RecordAppender::open(&output_dir.join(&p.name).join("runs.csv")))
        .collect::<Result<Vec<_>>>()?;
    let sink = Mutex::new((appenders, Vec::<Failure>::new(), 0usize));
    let learner = GbtLearner::new(config.learner);

    let work = |cell: &Cell| -> Result<()> {
        let prep = &prepared[cell.dataset];
        let p = config.p_values[cell.p_index];
        let (fraction, reached) = fractions[cell.dataset][cell.p_index];
        let seed = cell_seed(&prep.name, p, cell.r, cell.rho, cell.seed);
        let mut base_flags = Vec::new();
        if !reached {
            base_flags.push("trusted_ratio_unreached".to_string());
        }
        let prepared_cell = split_trusted(prep, p, fraction, cell.seed).and_then(|biq| {
            let actual = biq.n_trusted() as f64 / prep.train.n_samples() as f64;
            let (corrupted, flags) = corrupt_cell(&biq, &prep.derangement, cell.r, cell.rho, seed)?;
            Ok((corrupted, flags, actual))
        });
        let train_options = TrainOptions {
            calibration_folds: config.calibration_folds,
            seed: derive_seed(seed, 7),
        };
        for &m in &cell.methods {
            let method = &methods[m];
            let start = Instant::now();
            let outcome = match &prepared_cell {
                Ok((biq, corruption_flags, actual)) => {
                    evaluate_method(biq, &prep.test, method, &learner, &train_options).map(|(kappa, flags)| {
                        let mut all = base_flags.clone();
                        all.extend(corruption_flags.iter().cloned());
                        all.extend(flags);
                        (kappa, all, *actual)
                    })
                }
                Err(e) => Err(HarnessError::Input(e.to_string())),
            };
            let wall_time = start.elapsed().as_secs_f64();
            let mut record = RunRecord {
                dataset: prep.name.clone(),
                method: method.name().to_string(),
                p,
                actual_trusted_ratio: f64::NAN,
                r: cell.r,
                rho: cell.rho,
                seed: cell.seed,
                kappa: None,
                wall_time,
                flags: String::new(),
            };
            let mut failure = None;
            match outcome {
                Ok((kappa, flags, actual)) => {
                    record.kappa = Some(kappa);
                    record.actual_trusted_ratio = actual;
                    record.flags = flags.join(";");
                }
                Err(e) => {
                    log::warn!("{} {} p={p} r={} rho={} seed={}: {e}", prep.name, method, cell.r, cell.rho, cell.seed);
                    if let Ok((_, _, actual)) = &prepared_cell {
                        record.actual_trusted_ratio = *actual;
                    }
                    record.flags = "failed".into();
                    failure = Some(Failure {
                        dataset: prep.name.clone(),
                        method: method.name().to_string(),
                        p,
                        r: cell.r,
                        rho: cell.rho,
                        seed: cell.seed,
                        message: e.to_string(),
                    });
                }
            }
            let mut guard = sink.lock().expect("record writer poisoned");
            guard.0[cell.dataset].append(&record)?;
            guard.1.extend(failure);
            guard.2 += 1;
        }
        Ok(())
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    pool.install(|| cells.par_iter().try_for_each(work))?;

    let (_, mut failures, executed) = sink.into_inner().expect("record writer poisoned");
    let rank = |name: &str| methods.iter().position(|m| m.name() == name).unwrap_or(usize::MAX);
    let mut records = Vec::new();
    for prep in &prepared {
        let path = output_dir.join(&prep.name).join("runs.csv");
        let mut rows = read_records_dedup(&path)?;
        rows.sort_by(|a, b| a.canonical_cmp(b, &rank));
        write_records_atomic(&path, &rows)?;
        records.extend(rows);
    }

    failures.sort_by(|a, b| {
        (&a.dataset, a.p, a.r, a.rho, a.seed, rank(&a.method))
            .partial_cmp(&(&b.dataset, b.p, b.r, b.rho, b.seed, rank(&b.method)))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let failures_path = output_dir.join("failures.json");
    if failures.is_empty() {
        if failures_path.exists() {
            fs::remove_file(&failures_path).map_err(|e| HarnessError::io(&failures_path, e))?;
        }
    } else {
        let text = serde_json::to_string_pretty(&failures)?;
        fs::write(&failures_path, text).map_err(|e| HarnessError::io(&failures_path, e))?;
    }

    Ok(RunReport {
        output_dir,
        records,
        failures,
        executed,
        skipped,
    })
}
