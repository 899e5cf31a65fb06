//! Static SVG 1.1 scatter and line plots. Output bytes depend only on the input.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::Embedding2D;
use crate::geometry::AnalysisSeries;

/// Points drawn per scatter plot at most.
pub const SCATTER_CAP: usize = 5000;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;
const LEGEND: f64 = 150.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn colour(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

/// Indices kept when thinning to `cap`: every tag keeps a share proportional
/// to its size (at least one point), taken at evenly spaced positions.
pub fn stratified_subsample(tags: &[String], cap: usize) -> Vec<usize> {
    if tags.len() <= cap {
        return (0..tags.len()).collect();
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in tags.iter().enumerate() {
        groups.entry(t.as_str()).or_default().push(i);
    }
    let mut keep = Vec::with_capacity(cap);
    for members in groups.values() {
        let share = ((members.len() * cap) / tags.len()).max(1).min(members.len());
        for j in 0..share {
            keep.push(members[j * members.len() / share]);
        }
    }
    keep.sort_unstable();
    keep
}

fn header(out: &mut String, title: &str) {
    let total = WIDTH + LEGEND;
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{total}" height="{HEIGHT}" viewBox="0 0 {total} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN + 18.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/>"#,
            WIDTH + 4.0,
            y,
            colour(i)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            WIDTH + 20.0,
            y + 9.0,
            escape(name)
        );
    }
}

/// Maps `[lo, hi]` onto the plot area; a zero-width range maps to the centre.
fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        (a + b) / 2.0
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Scatter plot coloured by source tag, with a legend of all tags.
pub fn scatter_svg(embedding: &Embedding2D, title: &str) -> String {
    let mut names: Vec<&str> = embedding.tags.iter().map(String::as_str).collect();
    names.sort_unstable();
    names.dedup();
    let keep = stratified_subsample(&embedding.tags, SCATTER_CAP);
    let (x0, x1) = bounds(keep.iter().map(|&i| embedding.points[i][0]));
    let (y0, y1) = bounds(keep.iter().map(|&i| embedding.points[i][1]));
    let mut out = String::new();
    header(&mut out, title);
    for &i in &keep {
        let [x, y] = embedding.points[i];
        let c = names.binary_search(&embedding.tags[i].as_str()).unwrap_or(0);
        let px = scale(x, x0, x1, MARGIN + 4.0, WIDTH - MARGIN - 4.0);
        let py = scale(y, y0, y1, HEIGHT - MARGIN - 4.0, MARGIN + 4.0);
        let _ = writeln!(out, r#"<circle cx="{px:.2}" cy="{py:.2}" r="2" fill="{}" fill-opacity="0.7"/>"#, colour(c));
    }
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// One polyline per series over layer index, with a legend.
pub fn line_plot_svg(series: &[AnalysisSeries], title: &str) -> String {
    let layers = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.values.iter().copied()));
    let (y0, y1) = if y0.is_finite() { (y0.min(0.0), y1) } else { (0.0, 1.0) };
    let mut out = String::new();
    header(&mut out, title);
    let x_of = |l: usize| scale(l as f64, 0.0, layers.saturating_sub(1) as f64, MARGIN + 12.0, WIDTH - MARGIN - 12.0);
    for l in 0..layers {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{l}</text>"#,
            x_of(l),
            HEIGHT - MARGIN + 16.0
        );
    }
    for (label, v) in [(y0, y0), (y1, y1)] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            MARGIN - 4.0,
            scale(v, y0, y1, HEIGHT - MARGIN - 8.0, MARGIN + 8.0) + 4.0,
            crate::geometry::format_value(label)
        );
    }
    let mut names = Vec::with_capacity(series.len());
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(l, &v)| format!("{:.2},{:.2}", x_of(l), scale(v, y0, y1, HEIGHT - MARGIN - 8.0, MARGIN + 8.0)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            pts.join(" "),
            colour(i)
        );
        names.push(series_label(s));
    }
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    legend(&mut out, &refs);
    out.push_str("</svg>\n");
    out
}

fn series_label(s: &AnalysisSeries) -> String {
    match (s.original, s.predicted) {
        (Some(o), Some(p)) => format!("{} {} {o}->{p}", s.attack, s.analysis),
        _ => format!("{} {}", s.attack, s.analysis),
    }
}
