//! Static SVG rendering for weights, curves and test summaries.

use std::fmt::Write;

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::evalstat::Outcome;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Linear map from a data interval onto a pixel interval.
#[derive(Clone, Copy)]
struct Scale {
    d0: f64,
    d1: f64,
    p0: f64,
    p1: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, p0: f64, p1: f64) -> Self {
        let (lo, hi) = if hi - lo > 1e-12 { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        Self { d0: lo, d1: hi, p0, p1 }
    }

    fn fit(values: impl Iterator<Item = f64>, p0: f64, p1: f64, pad: f64) -> Self {
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let span = (hi - lo).max(1e-12);
        Self::new(lo - pad * span, hi + pad * span, p0, p1)
    }

    fn map(&self, v: f64) -> f64 {
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }
}

fn open_svg(width: u32, height: u32) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    s
}

fn check_2d(d: &Dataset) -> Result<()> {
    if d.n_features() != 2 {
        return Err(invalid(format!("scatter plots need 2 features, got {}", d.n_features())));
    }
    Ok(())
}

/// Trusted rows as squares, untrusted rows as circles whose area is
/// proportional to their weight, colored by label.
pub fn toy_weights_svg(trusted: &Dataset, untrusted: &Dataset, weights: &[f64]) -> Result<String> {
    check_2d(trusted)?;
    check_2d(untrusted)?;
    if weights.len() != untrusted.n_samples() {
        return Err(invalid("one weight per untrusted row is required"));
    }
    if trusted.is_empty() && untrusted.is_empty() {
        return Err(invalid("nothing to plot"));
    }
    let (w, h) = (640.0, 480.0);
    let all = trusted.features().rows().into_iter().chain(untrusted.features().rows()).map(|r| (r[0], r[1])).collect::<Vec<_>>();
    let sx = Scale::fit(all.iter().map(|p| p.0), 20.0, w - 20.0, 0.05);
    let sy = Scale::fit(all.iter().map(|p| p.1), h - 20.0, 20.0, 0.05);
    let w_max = weights.iter().cloned().fold(0.0, f64::max).max(1e-12);
    let mut s = open_svg(w as u32, h as u32);
    s.push_str("<g class=\"untrusted\" fill-opacity=\"0.5\">\n");
    for (i, row) in untrusted.features().outer_iter().enumerate() {
        let r = 8.0 * (weights[i] / w_max).sqrt();
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{:.3}" fill="{}" data-weight="{}"/>"#,
            sx.map(row[0]),
            sy.map(row[1]),
            r,
            color(untrusted.labels()[i]),
            weights[i]
        );
    }
    s.push_str("</g>\n<g class=\"trusted\" stroke=\"black\" stroke-width=\"0.5\">\n");
    for (i, row) in trusted.features().outer_iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="6" height="6" fill="{}"/>"#,
            sx.map(row[0]) - 3.0,
            sy.map(row[1]) - 3.0,
            color(trusted.labels()[i])
        );
    }
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}

/// Scatter of a 2-feature dataset; rows with `marked[i]` get a black ring.
pub fn scatter_svg(d: &Dataset, marked: Option<&[bool]>) -> Result<String> {
    check_2d(d)?;
    if d.is_empty() {
        return Err(invalid("nothing to plot"));
    }
    if marked.is_some_and(|m| m.len() != d.n_samples()) {
        return Err(invalid("one mark per row is required"));
    }
    let (w, h) = (640.0, 480.0);
    let sx = Scale::fit(d.features().column(0).iter().cloned(), 20.0, w - 20.0, 0.05);
    let sy = Scale::fit(d.features().column(1).iter().cloned(), h - 20.0, 20.0, 0.05);
    let mut s = open_svg(w as u32, h as u32);
    for (i, row) in d.features().outer_iter().enumerate() {
        let ring = marked.is_some_and(|m| m[i]);
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{}"{}/>"#,
            sx.map(row[0]),
            sy.map(row[1]),
            color(d.labels()[i]),
            if ring { r#" stroke="black" stroke-width="1.5""# } else { "" }
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// One polyline per named series over a shared x axis.
pub fn curves_svg(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> Result<String> {
    if series.is_empty() || series.iter().all(|(_, p)| p.is_empty()) {
        return Err(invalid("no curves to plot"));
    }
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (60.0, w - 160.0, 40.0, h - 50.0);
    let xs = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0));
    let ys = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.1));
    let sx = Scale::fit(xs, left, right, 0.0);
    let sy = Scale::fit(ys, bottom, top, 0.05);
    let mut s = open_svg(w as u32, h as u32);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, (left + right) / 2.0, escape(title));
    let _ = writeln!(s, r#"<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>"#);
    for t in 0..=4 {
        let xv = sx.d0 + (sx.d1 - sx.d0) * t as f64 / 4.0;
        let yv = sy.d0 + (sy.d1 - sy.d0) * t as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{xv:.3}</text>"#, sx.map(xv), bottom + 16.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#, left - 6.0, sy.map(yv) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (left + right) / 2.0, h - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(y_label)
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx.map(x), sy.map(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-name="{}" fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            escape(name),
            color(i),
            path.join(" ")
        );
        let ly = top + 18.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"/>"#, right + 12.0, right + 32.0, color(i));
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, right + 38.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Critical-difference diagram: methods placed on the mean-rank axis with a
/// bar of length `cd`.
pub fn cd_diagram_svg(methods: &[String], mean_ranks: &[f64], cd: f64) -> Result<String> {
    if methods.is_empty() || methods.len() != mean_ranks.len() {
        return Err(invalid("one mean rank per method is required"));
    }
    let k = methods.len();
    let (w, left, right) = (720.0, 80.0, 640.0);
    let h = 110.0 + 22.0 * k as f64;
    let axis_y = 60.0;
    let sc = Scale::new(1.0, k.max(2) as f64, left, right);
    let mut s = open_svg(w as u32, h as u32);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{axis_y}" x2="{right}" y2="{axis_y}" stroke="black"/>"#);
    for r in 1..=k.max(2) {
        let x = sc.map(r as f64);
        let _ = writeln!(s, r#"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{axis_y}" stroke="black"/><text x="{x:.1}" y="{}" text-anchor="middle">{r}</text>"#, axis_y - 6.0, axis_y - 10.0);
    }
    let cd_px = sc.map(1.0 + cd) - sc.map(1.0);
    let _ = writeln!(
        s,
        r#"<g class="cd"><line x1="{left}" y1="20" x2="{:.1}" y2="20" stroke="black" stroke-width="2"/><text x="{:.1}" y="14" text-anchor="middle">CD = {cd:.3}</text></g>"#,
        left + cd_px,
        left + cd_px / 2.0
    );
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| mean_ranks[a].total_cmp(&mean_ranks[b]));
    for (row, &m) in order.iter().enumerate() {
        let x = sc.map(mean_ranks[m]);
        let y = axis_y + 30.0 + 22.0 * row as f64;
        let _ = writeln!(
            s,
            r#"<g class="method"><line x1="{x:.1}" y1="{axis_y}" x2="{x:.1}" y2="{y}" stroke="gray"/><text x="{:.1}" y="{:.1}">{} ({:.2})</text></g>"#,
            x + 4.0,
            y + 4.0,
            escape(&methods[m]),
            mean_ranks[m]
        );
    }
    // bars joining methods whose ranks differ by less than cd
    let mut y = h - 20.0;
    for i in 0..k {
        let mut j = i;
        while j + 1 < k && mean_ranks[order[j + 1]] - mean_ranks[order[i]] < cd {
            j += 1;
        }
        if j > i {
            let _ = writeln!(
                s,
                r#"<line class="clique" x1="{:.1}" y1="{y}" x2="{:.1}" y2="{y}" stroke="black" stroke-width="3"/>"#,
                sc.map(mean_ranks[order[i]]),
                sc.map(mean_ranks[order[j]])
            );
            y -= 6.0;
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Grid of pairwise outcomes with rows and columns labeled.
pub fn wilcoxon_grid_svg(title: &str, row_labels: &[String], col_labels: &[String], cells: &[Vec<Outcome>]) -> Result<String> {
    if cells.len() != row_labels.len() || cells.iter().any(|r| r.len() != col_labels.len()) {
        return Err(invalid("grid shape does not match its labels"));
    }
    if cells.is_empty() {
        return Err(invalid("empty grid"));
    }
    let cell = 34.0;
    let (left, top) = (70.0, 50.0);
    let w = left + cell * col_labels.len() as f64 + 20.0;
    let h = top + cell * row_labels.len() as f64 + 20.0;
    let mut s = open_svg(w as u32, h as u32);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    for (j, c) in col_labels.iter().enumerate() {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, left + cell * (j as f64 + 0.5), top - 8.0, escape(c));
    }
    for (i, (label, row)) in row_labels.iter().zip(cells).enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, left - 8.0, y + cell / 2.0 + 4.0, escape(label));
        for (j, o) in row.iter().enumerate() {
            let fill = match o {
                Outcome::Win => "#c7e9c0",
                Outcome::Tie => "#f0f0f0",
                Outcome::Loss => "#fcbba1",
            };
            let x = left + cell * j as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{cell}" height="{cell}" fill="{fill}" stroke="white"/><text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="18">{}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 6.0,
                o.symbol()
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}
