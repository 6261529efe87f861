//! The `biq` command line.

use std::fs;
use std::path::{Path, PathBuf};

use biquality::biquality::{compute_weights, ReweightingMethod, TrainOptions};
use biquality::corruption::{inject_class_conditional_shift, inject_concept_drift, ClassConditionalSpec, ConceptDriftSpec};
use biquality::data::{load_csv, make_two_moons, stratified_split, BiqualityDataset};
use biquality::density_ratio::WeightVector;
use biquality::learners::{GbtLearner, GbtParams};
use biquality::plot::toy_weights_svg;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::plots::{write_cd_diagrams, write_curves, write_wilcoxon_grids};
use crate::runner::run_experiment;
use crate::summary::{load_results, summarize};
use crate::{HarnessError, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "biq", version, about = "Biquality reweighting experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a CSV dataset and print its shape and class counts.
    Ingest {
        #[command(flatten)]
        input: CsvInput,
        /// Re-write the parsed dataset here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inject concept drift and/or class-conditional shift into a CSV dataset.
    Corrupt {
        #[command(flatten)]
        input: CsvInput,
        #[arg(long, default_value_t = 0.0)]
        r: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Write the corruption audit as JSON.
        #[arg(long)]
        audit: Option<PathBuf>,
    },
    /// Compute untrusted-row weights for one method.
    Weights {
        #[arg(long)]
        trusted: PathBuf,
        #[arg(long)]
        untrusted: PathBuf,
        #[arg(long, default_value = "label")]
        label: String,
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        rounds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the experiment grid of a config file.
    Run {
        config: PathBuf,
    },
    /// Aggregate run records into AUC tables and test grids.
    Summarize {
        #[command(flatten)]
        source: ResultsSource,
    },
    /// Render SVG plots.
    Plot {
        #[arg(value_enum)]
        kind: PlotKind,
        #[command(flatten)]
        source: ResultsSource,
        #[command(flatten)]
        toy: ToyArgs,
    },
    /// Generate a two-moons dataset.
    Moons {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified split of a CSV dataset.
    Split {
        #[command(flatten)]
        input: CsvInput,
        /// Share of every class that goes to `--first`.
        #[arg(long)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        first: PathBuf,
        #[arg(long)]
        second: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct CsvInput {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "label")]
    pub label: String,
}

#[derive(Debug, Args)]
pub struct ResultsSource {
    /// Experiment config; its output directory holds the results.
    #[arg(long, conflicts_with = "results")]
    pub config: Option<PathBuf>,
    /// Results directory written by `run`.
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    #[arg(long)]
    pub trusted: Option<PathBuf>,
    #[arg(long)]
    pub untrusted: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    pub label: String,
    /// Output SVG for toy-weights.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Curves,
    CdDiagram,
    WilcoxonGrid,
    ToyWeights,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn base_dir(config_path: &Path) -> PathBuf {
    config_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Results directory plus the preferred method order.
fn resolve_results(source: &ResultsSource) -> Result<(PathBuf, Vec<String>)> {
    match (&source.config, &source.results) {
        (Some(path), _) => {
            let cfg = ExperimentConfig::load(path)?;
            let methods = cfg.methods()?.iter().map(|m| m.name().to_string()).collect();
            Ok((cfg.resolved_output_dir(), methods))
        }
        (None, Some(dir)) => Ok((
            dir.clone(),
            ReweightingMethod::NAMES.iter().map(|s| s.to_string()).collect(),
        )),
        (None, None) => Err(HarnessError::Config("pass --config or --results".into())),
    }
}

/// Executes a parsed command and returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Ingest { input, out } => {
            let d = load_csv(&input.input, &input.label)?;
            let summary = json!({"metadata": d.metadata(), "class_counts": d.class_counts()});
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if let Some(out) = out {
                d.save_csv(&out)?;
            }
        }
        Command::Corrupt { input, r, rho, seed, out, audit } => {
            let mut d = load_csv(&input.input, &input.label)?;
            let mut audits = Vec::new();
            if r > 0.0 {
                let spec = ConceptDriftSpec::new(r, d.n_classes(), seed)?;
                let (next, a) = inject_concept_drift(&d, &spec)?;
                d = next;
                audits.push(json!({"step": "concept_drift", "audit": a}));
            }
            if rho > 1.0 {
                let spec = ClassConditionalSpec::new(rho, biquality::derive_seed(seed, 2))?;
                let (next, a) = inject_class_conditional_shift(&d, &spec)?;
                d = next;
                audits.push(json!({"step": "class_conditional_shift", "audit": a}));
            }
            d.save_csv(&out)?;
            if let Some(path) = audit {
                write_text(&path, &serde_json::to_string_pretty(&audits)?)?;
            }
        }
        Command::Weights { trusted, untrusted, label, method, seed, rounds, out } => {
            let method: ReweightingMethod = method.parse().map_err(|e: biquality::Error| HarnessError::Config(e.to_string()))?;
            let t = load_csv(&trusted, &label)?;
            let u = load_csv(&untrusted, &label)?;
            let u = align_classes(&t, u)?;
            let biq = BiqualityDataset::new(t, u)?;
            let learner = GbtLearner::new(GbtParams {
                n_rounds: rounds,
                ..GbtParams::default()
            });
            let outcome = compute_weights(&biq, &method, &learner, &TrainOptions { calibration_folds: 3, seed })?;
            for flag in &outcome.flags {
                eprintln!("flag: {flag}");
            }
            outcome.weights.save_csv(&out)?;
        }
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg, &base_dir(&config))?;
            println!(
                "{} runs executed, {} skipped, {} failed; records in {}",
                report.executed,
                report.skipped,
                report.failures.len(),
                report.output_dir.display()
            );
            if !report.is_complete() {
                return Ok(EXIT_PARTIAL);
            }
        }
        Command::Summarize { source } => {
            let (dir, methods) = resolve_results(&source)?;
            let records = load_results(&dir)?;
            let summary = summarize(&records, &methods, source.alpha)?;
            summary.write(&dir.join("summary"), Some(&dir))?;
            for row in summary.auc.iter() {
                println!("{}\t{}\tp={}\t{}\tauc={:.4}", row.dataset, row.method, row.p, row.axis.name(), row.auc);
            }
            for note in &summary.notes {
                eprintln!("note: {note}");
            }
        }
        Command::Plot { kind, source, toy } => {
            let written = if kind == PlotKind::ToyWeights {
                vec![plot_toy(&toy)?]
            } else {
                let (dir, methods) = resolve_results(&source)?;
                let records = load_results(&dir)?;
                let summary = summarize(&records, &methods, source.alpha)?;
                match kind {
                    PlotKind::Curves => write_curves(&summary, &dir)?,
                    PlotKind::CdDiagram => write_cd_diagrams(&summary, &dir)?,
                    PlotKind::WilcoxonGrid => write_wilcoxon_grids(&summary, &dir)?,
                    PlotKind::ToyWeights => unreachable!(),
                }
            };
            for path in written {
                println!("{}", path.display());
            }
        }
        Command::Moons { n, noise, seed, out } => {
            make_two_moons(n, noise, seed)?.save_csv(&out)?;
        }
        Command::Split { input, fraction, seed, first, second } => {
            let d = load_csv(&input.input, &input.label)?;
            let (a, b) = stratified_split(&d, fraction, seed)?;
            a.save_csv(&first)?;
            b.save_csv(&second)?;
        }
    }
    Ok(EXIT_OK)
}

/// Re-encodes `u`'s labels with `t`'s class names when they differ in order.
fn align_classes(t: &biquality::data::Dataset, u: biquality::data::Dataset) -> Result<biquality::data::Dataset> {
    if t.class_names() == u.class_names() {
        return Ok(u);
    }
    let mapping: Vec<usize> = u
        .class_names()
        .iter()
        .map(|name| {
            t.class_names()
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| HarnessError::Input(format!("untrusted class `{name}` is absent from the trusted file")))
        })
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = u.labels().iter().map(|&y| mapping[y]).collect();
    Ok(biquality::data::Dataset::new(
        u.features().to_owned(),
        labels,
        u.feature_names().to_vec(),
        t.class_names().to_vec(),
    )?
    .with_label_column(u.label_column()))
}

fn plot_toy(toy: &ToyArgs) -> Result<PathBuf> {
    let need = |v: &Option<PathBuf>, name: &str| {
        v.clone().ok_or_else(|| HarnessError::Config(format!("toy-weights needs --{name}")))
    };
    let (trusted, untrusted, weights, out) = (
        need(&toy.trusted, "trusted")?,
        need(&toy.untrusted, "untrusted")?,
        need(&toy.weights, "weights")?,
        need(&toy.out, "out")?,
    );
    let t = load_csv(&trusted, &toy.label)?;
    let u = align_classes(&t, load_csv(&untrusted, &toy.label)?)?;
    let w = WeightVector::load_csv(&weights)?;
    let svg = toy_weights_svg(&t, &u, w.values())?;
    write_text(&out, &svg)?;
    Ok(out)
}

/// Exit code of a fatal error. Every error that stops a command before any
/// run completes counts as a configuration error.
pub fn exit_code(_err: &HarnessError) -> i32 {
    EXIT_CONFIG
}
