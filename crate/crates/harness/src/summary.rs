//! AUC tables, Friedman / Nemenyi data and pairwise Wilcoxon grids.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use biquality::evalstat::{friedman_nemenyi, normalized_auc, wilcoxon_signed_rank, Outcome, RankTestResult};
use serde::{Deserialize, Serialize};

use crate::record::{read_records_dedup, RunRecord};
use crate::{HarnessError, Result};

/// The two corruption axes of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Concept-drift strength `r` at `rho = 1`.
    R,
    /// Subsampling strength `rho` at `r = 0`.
    Rho,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::R => "r",
            Axis::Rho => "rho",
        }
    }

    /// Strength of the cell `(r, rho)` on this axis, or `None` off the axis.
    pub fn strength(self, r: f64, rho: f64) -> Option<f64> {
        match self {
            Axis::R if rho == 1.0 => Some(r),
            Axis::Rho if r == 0.0 && rho.is_finite() => Some(rho),
            _ => None,
        }
    }
}

/// Mean kappa over seeds of one method on one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMean {
    pub dataset: String,
    pub method: String,
    pub p: f64,
    pub r: f64,
    pub rho: f64,
    pub mean_kappa: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub dataset: String,
    pub method: String,
    pub p: f64,
    pub axis: Axis,
    pub auc: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub axis: Axis,
    pub p: f64,
    pub methods: Vec<String>,
    pub mean_ranks: Vec<f64>,
    pub critical_difference: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    pub datasets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonCell {
    pub method_a: String,
    pub method_b: String,
    pub p: f64,
    pub r: f64,
    pub rho: f64,
    pub n_pairs: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub outcome: Outcome,
    pub symbol: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub methods: Vec<String>,
    pub cell_means: Vec<CellMean>,
    pub auc: Vec<AucRow>,
    pub ranks: Vec<RankSummary>,
    pub wilcoxon: Vec<WilcoxonCell>,
    /// Cells or datasets left out of a comparison because a method lacked them.
    pub notes: Vec<String>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
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

/// Method names in `preferred` order, followed by any others by name.
fn method_order(records: &[RunRecord], preferred: &[String]) -> Vec<String> {
    let present: BTreeSet<&str> = records.iter().map(|r| r.method.as_str()).collect();
    let mut out: Vec<String> = preferred.iter().filter(|m| present.contains(m.as_str())).cloned().collect();
    for m in present {
        if !out.iter().any(|o| o == m) {
            out.push(m.to_string());
        }
    }
    out
}

type CellKey = (String, String, u64, u64, u64);

fn bits(v: f64) -> u64 {
    v.to_bits()
}

/// Aggregates successful records. `preferred_methods` fixes the method order
/// of every table; `alpha` is the significance level of the tests.
pub fn summarize(records: &[RunRecord], preferred_methods: &[String], alpha: f64) -> Result<Summary> {
    let ok: Vec<&RunRecord> = records.iter().filter(|r| r.kappa.is_some()).collect();
    if ok.is_empty() {
        return Err(HarnessError::Input("no successful run records to summarize".into()));
    }
    let owned: Vec<RunRecord> = ok.iter().map(|r| (*r).clone()).collect();
    let methods = method_order(&owned, preferred_methods);
    let mut notes = Vec::new();

    // mean over seeds per (dataset, method, p, r, rho)
    let mut groups: BTreeMap<CellKey, Vec<f64>> = BTreeMap::new();
    for r in &ok {
        groups
            .entry((r.dataset.clone(), r.method.clone(), bits(r.p), bits(r.r), bits(r.rho)))
            .or_default()
            .push(r.kappa.expect("filtered"));
    }
    let mut cell_means: Vec<CellMean> = groups
        .iter()
        .map(|((d, m, p, r, rho), v)| CellMean {
            dataset: d.clone(),
            method: m.clone(),
            p: f64::from_bits(*p),
            r: f64::from_bits(*r),
            rho: f64::from_bits(*rho),
            mean_kappa: mean(v),
            n_seeds: v.len(),
        })
        .collect();
    let rank = |m: &str| methods.iter().position(|x| x == m).unwrap_or(usize::MAX);
    cell_means.sort_by(|a, b| {
        a.dataset
            .cmp(&b.dataset)
            .then(a.p.total_cmp(&b.p))
            .then(rank(&a.method).cmp(&rank(&b.method)))
            .then(a.r.total_cmp(&b.r))
            .then(a.rho.total_cmp(&b.rho))
    });

    let datasets: BTreeSet<String> = ok.iter().map(|r| r.dataset.clone()).collect();
    let mut p_values: Vec<f64> = ok.iter().map(|r| r.p).collect();
    p_values.sort_by(f64::total_cmp);
    p_values.dedup();

    // AUC per (dataset, method, p, axis)
    let mut auc = Vec::new();
    for dataset in &datasets {
        for &p in &p_values {
            for axis in [Axis::R, Axis::Rho] {
                let mut all_strengths = BTreeSet::new();
                let mut per_method = Vec::new();
                for method in &methods {
                    let mut pts: Vec<(f64, f64)> = cell_means
                        .iter()
                        .filter(|c| &c.dataset == dataset && &c.method == method && c.p == p)
                        .filter_map(|c| axis.strength(c.r, c.rho).map(|s| (s, c.mean_kappa)))
                        .collect();
                    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                    all_strengths.extend(pts.iter().map(|x| bits(x.0)));
                    per_method.push((method, pts));
                }
                for (method, pts) in per_method {
                    if pts.len() < 2 {
                        continue;
                    }
                    if pts.len() < all_strengths.len() {
                        notes.push(format!(
                            "{dataset} {method} p={p} axis {}: {} of {} strengths present",
                            axis.name(),
                            pts.len(),
                            all_strengths.len()
                        ));
                    }
                    auc.push(AucRow {
                        dataset: dataset.clone(),
                        method: method.clone(),
                        p,
                        axis,
                        auc: normalized_auc(&pts)?,
                        n_points: pts.len(),
                    });
                }
            }
        }
    }

    // Friedman / Nemenyi per (axis, p) over datasets where every method has an AUC
    let mut ranks = Vec::new();
    if methods.len() >= 3 {
        for axis in [Axis::R, Axis::Rho] {
            for &p in &p_values {
                let lookup = |d: &str, m: &str| {
                    auc.iter()
                        .find(|a| a.axis == axis && a.p == p && a.dataset == d && a.method == m)
                        .map(|a| a.auc)
                };
                let mut used = Vec::new();
                for d in &datasets {
                    if methods.iter().all(|m| lookup(d, m).is_some()) {
                        used.push(d.clone());
                    } else if methods.iter().any(|m| lookup(d, m).is_some()) {
                        notes.push(format!("{d} excluded from ranks on axis {} p={p}: missing methods", axis.name()));
                    }
                }
                if used.len() < 2 {
                    continue;
                }
                let scores: Vec<Vec<f64>> = methods
                    .iter()
                    .map(|m| used.iter().map(|d| lookup(d, m).expect("checked")).collect())
                    .collect();
                let fn_ = friedman_nemenyi(&scores, alpha)?;
                ranks.push(RankSummary {
                    axis,
                    p,
                    methods: methods.clone(),
                    mean_ranks: fn_.mean_ranks,
                    critical_difference: fn_.critical_difference,
                    statistic: fn_.test.statistic,
                    p_value: fn_.test.p_value,
                    reject: fn_.test.decision == biquality::evalstat::Decision::Reject,
                    datasets: used,
                });
            }
        }
    }

    // Wilcoxon per method pair, p and (r, rho), paired over (dataset, seed)
    let mut by_run: BTreeMap<(String, u64, u64, u64, String, u64), f64> = BTreeMap::new();
    for r in &ok {
        by_run.insert(
            (r.method.clone(), bits(r.p), bits(r.r), bits(r.rho), r.dataset.clone(), r.seed),
            r.kappa.expect("filtered"),
        );
    }
    let mut grid_cells: Vec<(f64, f64, f64)> = ok.iter().map(|r| (r.p, r.r, r.rho)).collect();
    grid_cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    grid_cells.dedup();
    let mut wilcoxon = Vec::new();
    for (i, a) in methods.iter().enumerate() {
        for b in &methods[i + 1..] {
            for &(p, r, rho) in &grid_cells {
                let units = |m: &str| -> BTreeMap<(String, u64), f64> {
                    by_run
                        .range((m.to_string(), bits(p), bits(r), bits(rho), String::new(), 0)..)
                        .take_while(|(k, _)| k.0 == m && k.1 == bits(p) && k.2 == bits(r) && k.3 == bits(rho))
                        .map(|(k, v)| ((k.4.clone(), k.5), *v))
                        .collect()
                };
                let (ua, ub) = (units(a), units(b));
                if ua.is_empty() || ub.is_empty() {
                    continue;
                }
                let mut xa = Vec::new();
                let mut xb = Vec::new();
                for (k, va) in &ua {
                    if let Some(vb) = ub.get(k) {
                        xa.push(*va);
                        xb.push(*vb);
                    }
                }
                let unpaired = ua.len() + ub.len() - 2 * xa.len();
                if unpaired > 0 {
                    notes.push(format!(
                        "{a} vs {b} p={p} r={r} rho={rho}: {unpaired} unpaired runs excluded"
                    ));
                }
                if xa.is_empty() {
                    continue;
                }
                let test: RankTestResult = wilcoxon_signed_rank(&xa, &xb, alpha)?;
                let diffs: Vec<f64> = xa.iter().zip(&xb).map(|(x, y)| x - y).collect();
                let outcome = Outcome::from_test(&test, median(diffs));
                wilcoxon.push(WilcoxonCell {
                    method_a: a.clone(),
                    method_b: b.clone(),
                    p,
                    r,
                    rho,
                    n_pairs: xa.len(),
                    statistic: test.statistic,
                    p_value: test.p_value,
                    outcome,
                    symbol: outcome.symbol().to_string(),
                });
            }
        }
    }

    Ok(Summary {
        methods,
        cell_means,
        auc,
        ranks,
        wilcoxon,
        notes,
    })
}

/// Every dataset's `runs.csv` under a results directory, in directory order.
pub fn load_results(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path().join("runs.csv"))
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    let mut out = Vec::new();
    for path in entries {
        out.extend(read_records_dedup(&path)?);
    }
    Ok(out)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

#[derive(Serialize)]
struct RankCsvRow<'a> {
    axis: Axis,
    p: f64,
    method: &'a str,
    mean_rank: f64,
    critical_difference: f64,
}

/// Mean kappa over datasets per method, p and cell (the layout of the
/// published tables).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub p: f64,
    pub r: f64,
    pub rho: f64,
    pub mean_kappa: f64,
    pub n_datasets: usize,
}

impl Summary {
    pub fn table(&self) -> Vec<TableRow> {
        let mut groups: BTreeMap<(usize, u64, u64, u64), Vec<f64>> = BTreeMap::new();
        for c in &self.cell_means {
            let m = self.methods.iter().position(|x| x == &c.method).unwrap_or(usize::MAX);
            groups
                .entry((m, bits(c.p), bits(c.r), bits(c.rho)))
                .or_default()
                .push(c.mean_kappa);
        }
        let mut rows: Vec<TableRow> = groups
            .into_iter()
            .map(|((m, p, r, rho), v)| TableRow {
                method: self.methods[m].clone(),
                p: f64::from_bits(p),
                r: f64::from_bits(r),
                rho: f64::from_bits(rho),
                mean_kappa: mean(&v),
                n_datasets: v.len(),
            })
            .collect();
        rows.sort_by(|a, b| {
            let ra = self.methods.iter().position(|x| x == &a.method);
            let rb = self.methods.iter().position(|x| x == &b.method);
            a.p.total_cmp(&b.p)
                .then(ra.cmp(&rb))
                .then(a.r.total_cmp(&b.r))
                .then(a.rho.total_cmp(&b.rho))
        });
        rows
    }

    /// Writes CSV and JSON files into `dir`, plus per-dataset AUC and cell
    /// means into `<root>/<dataset>/summary/` when `root` is given.
    pub fn write(&self, dir: &Path, root: Option<&Path>) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        write_csv(&dir.join("cell_means.csv"), &self.cell_means)?;
        write_csv(&dir.join("auc.csv"), &self.auc)?;
        write_json(&dir.join("auc.json"), &self.auc)?;
        write_csv(&dir.join("table.csv"), &self.table())?;
        let rank_rows: Vec<RankCsvRow> = self
            .ranks
            .iter()
            .flat_map(|s| {
                s.methods.iter().zip(&s.mean_ranks).map(|(m, &r)| RankCsvRow {
                    axis: s.axis,
                    p: s.p,
                    method: m,
                    mean_rank: r,
                    critical_difference: s.critical_difference,
                })
            })
            .collect();
        write_csv(&dir.join("ranks.csv"), &rank_rows)?;
        write_json(&dir.join("ranks.json"), &self.ranks)?;
        write_csv(&dir.join("wilcoxon.csv"), &self.wilcoxon)?;
        write_json(&dir.join("wilcoxon.json"), &self.wilcoxon)?;
        write_json(&dir.join("notes.json"), &self.notes)?;

        if let Some(root) = root {
            let datasets: BTreeSet<&str> = self.cell_means.iter().map(|c| c.dataset.as_str()).collect();
            for d in datasets {
                let sub = root.join(d).join("summary");
                fs::create_dir_all(&sub).map_err(|e| HarnessError::io(&sub, e))?;
                let cells: Vec<&CellMean> = self.cell_means.iter().filter(|c| c.dataset == d).collect();
                let auc: Vec<&AucRow> = self.auc.iter().filter(|a| a.dataset == d).collect();
                write_csv(&sub.join("cell_means.csv"), &cells)?;
                write_csv(&sub.join("auc.csv"), &auc)?;
                write_json(&sub.join("auc.json"), &auc)?;
            }
        }
        Ok(())
    }
}
