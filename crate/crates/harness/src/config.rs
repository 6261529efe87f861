//! Experiment configuration, read from TOML or JSON.

use std::path::{Path, PathBuf};

use biquality::biquality::ReweightingMethod;
use biquality::data::{default_ratio_grid, load_csv, make_two_moons, Dataset};
use biquality::learners::GbtParams;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Environment variable that, when set, anchors a relative `output_dir`.
pub const OUTPUT_ROOT_ENV: &str = "BIQ_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSource {
    Csv {
        #[serde(default)]
        name: Option<String>,
        path: PathBuf,
        label_column: String,
    },
    TwoMoons {
        #[serde(default)]
        name: Option<String>,
        two_moons: MoonsSpec,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoonsSpec {
    pub n: usize,
    #[serde(default = "default_noise")]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_noise() -> f64 {
    0.1
}

impl DatasetSource {
    pub fn name(&self) -> String {
        match self {
            DatasetSource::Csv { name: Some(n), .. } | DatasetSource::TwoMoons { name: Some(n), .. } => n.clone(),
            DatasetSource::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into()),
            DatasetSource::TwoMoons { .. } => "two_moons".into(),
        }
    }

    /// Loads the data; relative CSV paths resolve against `base_dir`.
    pub fn load(&self, base_dir: &Path) -> Result<Dataset, HarnessError> {
        match self {
            DatasetSource::Csv { path, label_column, .. } => {
                let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                Ok(load_csv(&full, label_column)?)
            }
            DatasetSource::TwoMoons { two_moons: m, .. } => Ok(make_two_moons(m.n, m.noise_sd, m.seed)?),
        }
    }
}

/// A method given either by name or as a table with parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MethodEntry {
    Name(String),
    Spec(ReweightingMethod),
}

impl MethodEntry {
    pub fn resolve(&self) -> Result<ReweightingMethod, HarnessError> {
        match self {
            MethodEntry::Name(n) => n.parse().map_err(|e: biquality::Error| HarnessError::Config(e.to_string())),
            MethodEntry::Spec(m) => Ok(*m),
        }
    }
}

/// Which `(r, rho)` cells to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridLayout {
    /// Every combination of `r_grid` and `rho_grid`.
    #[default]
    Full,
    /// `r_grid` at `rho = 1` plus `rho_grid` at `r = 0`.
    Axes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetSource>,
    #[serde(default = "default_p_values")]
    pub p_values: Vec<f64>,
    /// Fixed trusted fraction of the training split; skips learning-curve
    /// calibration when set.
    #[serde(default)]
    pub trusted_ratio: Option<f64>,
    #[serde(default = "default_r_grid")]
    pub r_grid: Vec<f64>,
    #[serde(default = "default_rho_grid")]
    pub rho_grid: Vec<f64>,
    #[serde(default)]
    pub grid: GridLayout,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodEntry>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_ratio_grid")]
    pub ratio_grid: Vec<f64>,
    #[serde(default = "default_calibration_folds")]
    pub calibration_folds: usize,
    #[serde(default)]
    pub learner: GbtParams,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_p_values() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}

fn default_r_grid() -> Vec<f64> {
    vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
}

fn default_rho_grid() -> Vec<f64> {
    vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0]
}

fn default_methods() -> Vec<MethodEntry> {
    ReweightingMethod::NAMES.iter().map(|n| MethodEntry::Name(n.to_string())).collect()
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_parallelism() -> usize {
    1
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_calibration_folds() -> usize {
    3
}

fn default_alpha() -> f64 {
    0.05
}

impl ExperimentConfig {
    /// A config over the given datasets with every other field at its default.
    pub fn with_datasets(datasets: Vec<DatasetSource>) -> Self {
        Self {
            datasets,
            p_values: default_p_values(),
            trusted_ratio: None,
            r_grid: default_r_grid(),
            rho_grid: default_rho_grid(),
            grid: GridLayout::default(),
            methods: default_methods(),
            seeds: default_seeds(),
            output_dir: default_output_dir(),
            parallelism: default_parallelism(),
            test_fraction: default_test_fraction(),
            ratio_grid: default_ratio_grid(),
            calibration_folds: default_calibration_folds(),
            learner: GbtParams::default(),
            alpha: default_alpha(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `.json` files as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            _ => Self::from_toml(&text),
        }
    }

    pub fn methods(&self) -> Result<Vec<ReweightingMethod>, HarnessError> {
        self.methods.iter().map(MethodEntry::resolve).collect()
    }

    /// `(r, rho)` cells in run order.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        match self.grid {
            GridLayout::Full => self
                .r_grid
                .iter()
                .flat_map(|&r| self.rho_grid.iter().map(move |&rho| (r, rho)))
                .collect(),
            GridLayout::Axes => {
                let mut cells: Vec<(f64, f64)> = self.r_grid.iter().map(|&r| (r, 1.0)).collect();
                for &rho in &self.rho_grid {
                    if !cells.contains(&(0.0, rho)) {
                        cells.push((0.0, rho));
                    }
                }
                cells
            }
        }
    }

    /// Output directory after applying [`OUTPUT_ROOT_ENV`].
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::Config(m));
        if self.datasets.is_empty() {
            return fail("at least one dataset is required".into());
        }
        let mut names: Vec<String> = self.datasets.iter().map(DatasetSource::name).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return fail("dataset names must be unique".into());
        }
        for (name, grid) in [("p_values", &self.p_values), ("r_grid", &self.r_grid), ("rho_grid", &self.rho_grid)] {
            if grid.is_empty() {
                return fail(format!("{name} must not be empty"));
            }
        }
        if let Some(p) = self.p_values.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return fail(format!("p = {p} outside (0, 1]"));
        }
        if let Some(r) = self.r_grid.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return fail(format!("r = {r} outside [0, 1]"));
        }
        if let Some(rho) = self.rho_grid.iter().find(|rho| !(**rho >= 1.0)) {
            return fail(format!("rho = {rho} must be >= 1"));
        }
        if self.trusted_ratio.is_some_and(|t| !(t > 0.0 && t < 1.0)) {
            return fail("trusted_ratio must lie in (0, 1)".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return fail("test_fraction must lie in (0, 1)".into());
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail("alpha must lie in (0, 1)".into());
        }
        self.learner.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let methods = self.methods()?;
        if methods.is_empty() {
            return fail("at least one method is required".into());
        }
        let mut method_names: Vec<&str> = methods.iter().map(|m| m.name()).collect();
        method_names.sort();
        if method_names.windows(2).any(|w| w[0] == w[1]) {
            return fail("each method may appear once".into());
        }
        Ok(())
    }
}
