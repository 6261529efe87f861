//! Run records and their CSV persistence.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{HarnessError, Result};

/// One trained method evaluated on one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub method: String,
    pub p: f64,
    pub actual_trusted_ratio: f64,
    pub r: f64,
    pub rho: f64,
    pub seed: u64,
    /// Empty when the run failed.
    pub kappa: Option<f64>,
    pub wall_time: f64,
    /// Diagnostics joined with `;`.
    pub flags: String,
}

/// Identity of a run; floats compare through their shortest round-trip text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RunKey {
    pub dataset: String,
    pub method: String,
    pub p: String,
    pub r: String,
    pub rho: String,
    pub seed: u64,
}

impl RunKey {
    pub fn new(dataset: &str, method: &str, p: f64, r: f64, rho: f64, seed: u64) -> Self {
        Self {
            dataset: dataset.to_string(),
            method: method.to_string(),
            p: p.to_string(),
            r: r.to_string(),
            rho: rho.to_string(),
            seed,
        }
    }
}

impl RunRecord {
    pub fn key(&self) -> RunKey {
        RunKey::new(&self.dataset, &self.method, self.p, self.r, self.rho, self.seed)
    }

    pub fn failed(&self) -> bool {
        self.kappa.is_none()
    }

    pub fn flag_list(&self) -> Vec<&str> {
        self.flags.split(';').filter(|f| !f.is_empty()).collect()
    }

    /// Canonical order: dataset, p, r, rho, seed, then method by `method_rank`.
    pub fn canonical_cmp(&self, other: &Self, method_rank: &dyn Fn(&str) -> usize) -> Ordering {
        self.dataset
            .cmp(&other.dataset)
            .then(self.p.total_cmp(&other.p))
            .then(self.r.total_cmp(&other.r))
            .then(self.rho.total_cmp(&other.rho))
            .then(self.seed.cmp(&other.seed))
            .then(method_rank(&self.method).cmp(&method_rank(&other.method)))
            .then(self.method.cmp(&other.method))
    }
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Reads records, keeping the last occurrence of each duplicated key.
pub fn read_records_dedup(path: &Path) -> Result<Vec<RunRecord>> {
    let mut by_key: BTreeMap<RunKey, (usize, RunRecord)> = BTreeMap::new();
    for (i, rec) in read_records(path)?.into_iter().enumerate() {
        if by_key.insert(rec.key(), (i, rec)).is_some() {
            log::warn!("duplicate run key in {}; keeping the later record", path.display());
        }
    }
    let mut rows: Vec<(usize, RunRecord)> = by_key.into_values().collect();
    rows.sort_by_key(|(i, _)| *i);
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

/// Writes `records` to `path` through a temporary file and a rename.
pub fn write_records_atomic(path: &Path, records: &[RunRecord]) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut writer = csv::Writer::from_path(&tmp)?;
        for r in records {
            writer.serialize(r)?;
        }
        writer.flush().map_err(|e| HarnessError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

/// Appends records to a CSV file, writing the header only for a new file.
pub struct RecordAppender {
    writer: csv::Writer<fs::File>,
    path: std::path::PathBuf,
}

impl RecordAppender {
    pub fn open(path: &Path) -> Result<Self> {
        let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| HarnessError::io(path, e))?;
        let writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        Ok(Self {
            writer,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, record: &RunRecord) -> Result<()> {
        self.writer.serialize(record)?;
        self.writer.flush().map_err(|e| HarnessError::io(&self.path, e))
    }
}
