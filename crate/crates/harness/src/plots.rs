//! SVG files for a [`Summary`].

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use biquality::evalstat::Outcome;
use biquality::plot::{cd_diagram_svg, curves_svg, wilcoxon_grid_svg};

use crate::summary::{Axis, Summary};
use crate::{HarnessError, Result};

fn save(path: PathBuf, svg: String, written: &mut Vec<PathBuf>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(&path, svg).map_err(|e| HarnessError::io(&path, e))?;
    written.push(path);
    Ok(())
}

fn file_token(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' }).collect()
}

type Series = Vec<(String, Vec<(f64, f64)>)>;

fn axis_series(summary: &Summary, axis: Axis, p: f64, dataset: Option<&str>) -> Series {
    let mut out = Vec::new();
    if let Some(d) = dataset {
        for m in &summary.methods {
            let mut pts: Vec<(f64, f64)> = summary
                .cell_means
                .iter()
                .filter(|c| c.dataset == d && &c.method == m && c.p == p)
                .filter_map(|c| axis.strength(c.r, c.rho).map(|s| (s, c.mean_kappa)))
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            if !pts.is_empty() {
                out.push((m.clone(), pts));
            }
        }
    } else {
        let table = summary.table();
        for m in &summary.methods {
            let mut pts: Vec<(f64, f64)> = table
                .iter()
                .filter(|t| &t.method == m && t.p == p)
                .filter_map(|t| axis.strength(t.r, t.rho).map(|s| (s, t.mean_kappa)))
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            if !pts.is_empty() {
                out.push((m.clone(), pts));
            }
        }
    }
    out
}

fn p_values(summary: &Summary) -> Vec<f64> {
    let mut ps: Vec<f64> = summary.cell_means.iter().map(|c| c.p).collect();
    ps.sort_by(f64::total_cmp);
    ps.dedup();
    ps
}

/// Kappa curves per dataset under `root/<dataset>/plots/` and averaged over
/// datasets under `root/plots/`, one file per (axis, p).
pub fn write_curves(summary: &Summary, root: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let datasets: BTreeSet<&str> = summary.cell_means.iter().map(|c| c.dataset.as_str()).collect();
    for p in p_values(summary) {
        for axis in [Axis::R, Axis::Rho] {
            let x_label = match axis {
                Axis::R => "concept drift r (rho = 1)",
                Axis::Rho => "subsampling rho (r = 0)",
            };
            let name = format!("curves_{}_p{}.svg", axis.name(), file_token(&p.to_string()));
            for d in &datasets {
                let series = axis_series(summary, axis, p, Some(d));
                if series.iter().any(|s| s.1.len() >= 2) {
                    let svg = curves_svg(&format!("{d}, p = {p}"), x_label, "kappa", &series)?;
                    save(root.join(d).join("plots").join(&name), svg, &mut written)?;
                }
            }
            let series = axis_series(summary, axis, p, None);
            if series.iter().any(|s| s.1.len() >= 2) {
                let svg = curves_svg(&format!("mean over datasets, p = {p}"), x_label, "kappa", &series)?;
                save(root.join("plots").join(&name), svg, &mut written)?;
            }
        }
    }
    if written.is_empty() {
        return Err(HarnessError::Input("no curve has two strengths on either axis".into()));
    }
    Ok(written)
}

/// One critical-difference diagram per (axis, p) under `root/plots/`.
pub fn write_cd_diagrams(summary: &Summary, root: &Path) -> Result<Vec<PathBuf>> {
    if summary.ranks.is_empty() {
        return Err(HarnessError::Input(
            "no rank summary: needs at least 3 methods and 2 datasets".into(),
        ));
    }
    let mut written = Vec::new();
    for r in &summary.ranks {
        let svg = cd_diagram_svg(&r.methods, &r.mean_ranks, r.critical_difference)?;
        let name = format!("cd_{}_p{}.svg", r.axis.name(), file_token(&r.p.to_string()));
        save(root.join("plots").join(name), svg, &mut written)?;
    }
    Ok(written)
}

/// One r-by-rho outcome grid per method pair and p under `root/plots/`.
/// Cells without a test are drawn as ties.
pub fn write_wilcoxon_grids(summary: &Summary, root: &Path) -> Result<Vec<PathBuf>> {
    if summary.wilcoxon.is_empty() {
        return Err(HarnessError::Input("no pairwise tests: needs at least 2 methods".into()));
    }
    let mut written = Vec::new();
    let mut pairs: Vec<(&str, &str, f64)> = summary
        .wilcoxon
        .iter()
        .map(|c| (c.method_a.as_str(), c.method_b.as_str(), c.p))
        .collect();
    pairs.dedup();
    for (a, b, p) in pairs {
        let cells: Vec<_> = summary
            .wilcoxon
            .iter()
            .filter(|c| c.method_a == a && c.method_b == b && c.p == p)
            .collect();
        let mut rs: Vec<f64> = cells.iter().map(|c| c.r).collect();
        let mut rhos: Vec<f64> = cells.iter().map(|c| c.rho).collect();
        rs.sort_by(f64::total_cmp);
        rs.dedup();
        rhos.sort_by(f64::total_cmp);
        rhos.dedup();
        let grid: Vec<Vec<Outcome>> = rs
            .iter()
            .map(|&r| {
                rhos.iter()
                    .map(|&rho| {
                        cells
                            .iter()
                            .find(|c| c.r == r && c.rho == rho)
                            .map_or(Outcome::Tie, |c| c.outcome)
                    })
                    .collect()
            })
            .collect();
        let rows: Vec<String> = rs.iter().map(|r| format!("r={r}")).collect();
        let cols: Vec<String> = rhos.iter().map(|rho| format!("rho={rho}")).collect();
        let svg = wilcoxon_grid_svg(&format!("{a} vs {b}, p = {p}"), &rows, &cols, &grid)?;
        let name = format!(
            "wilcoxon_{}_vs_{}_p{}.svg",
            file_token(a),
            file_token(b),
            file_token(&p.to_string())
        );
        save(root.join("plots").join(name), svg, &mut written)?;
    }
    Ok(written)
}
