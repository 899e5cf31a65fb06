//! Quantitative analyses of adversarial examples in activation space.

mod analyses;
mod hull;
mod snn;
mod triples;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atlas::AtlasError;
use crate::attacks::CorpusManifest;

pub use analyses::{class_distance_profile, knn_ratio, layerwise_manifold_distance, ManifoldDistances};
pub use hull::{kkt_residual, project_simplex, project_to_hull, HullProjection, KKT_TOLERANCE, MAX_ITERATIONS};
pub use snn::{
    entanglement, optimize_temperature, optimize_temperature_from_distances, snn_loss, snn_loss_from_distances,
    squared_distances, SnnConfig,
};
pub use triples::{make_triples, matched_noise, Triple};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch")]
    Dimension,
    #[error("non-finite coordinates")]
    NonFinite,
    #[error("{0}")]
    Empty(&'static str),
    #[error("invalid analysis config: {0}")]
    Config(String),
    #[error("hull projection stopped at KKT residual {residual:e}")]
    NotConverged { residual: f64, best: Box<HullProjection> },
    #[error(transparent)]
    Atlas(#[from] AtlasError),
    #[error("{0}")]
    Io(String),
}

/// An `(original, predicted)` confusion with its number of successful records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPair {
    pub original: u8,
    pub predicted: u8,
    pub count: u32,
}

/// Off-diagonal cells with at least `min_count` records, by descending count
/// and then ascending `(original, predicted)`.
pub fn select_confused_pairs(manifest: &CorpusManifest, min_count: u32) -> Vec<ClassPair> {
    let mut pairs: Vec<ClassPair> = manifest
        .counts
        .iter()
        .enumerate()
        .flat_map(|(o, row)| {
            row.iter().enumerate().filter_map(move |(p, &count)| {
                (o != p && count >= min_count && count > 0).then_some(ClassPair {
                    original: o as u8,
                    predicted: p as u8,
                    count,
                })
            })
        })
        .collect();
    pairs.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then(a.original.cmp(&b.original))
            .then(a.predicted.cmp(&b.predicted))
    });
    pairs
}

/// One per-layer curve.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSeries {
    pub network: String,
    pub analysis: String,
    /// Attack id or corpus tag.
    pub attack: String,
    pub original: Option<u8>,
    pub predicted: Option<u8>,
    pub values: Vec<f64>,
    /// Samples behind each value.
    pub counts: Vec<usize>,
}

pub const SERIES_HEADER: [&str; 8] = ["network", "analysis", "attack", "C_o", "C_p", "layer", "value", "n"];

/// Nine significant digits; scientific notation outside `[1e-4, 1e9)`.
pub fn format_value(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "NaN".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let exp: i32 = sci.split('e').nth(1).and_then(|e| e.parse().ok()).unwrap_or(0);
    if !(-4..9).contains(&exp) {
        return sci;
    }
    let rounded: f64 = sci.parse().unwrap_or(v);
    let decimals = (8 - exp) as usize;
    let s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Writes series as CSV rows, one per layer. `preamble` lines are emitted first,
/// each prefixed with `# `.
pub fn write_series_csv(path: &Path, preamble: &[String], series: &[AnalysisSeries]) -> Result<(), GeometryError> {
    let io = |e: std::io::Error| GeometryError::Io(format!("{}: {e}", path.display()));
    let mut buf = Vec::new();
    for line in preamble {
        writeln!(buf, "# {line}").map_err(io)?;
    }
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
        let cerr = |e: csv::Error| GeometryError::Io(format!("{}: {e}", path.display()));
        w.write_record(SERIES_HEADER).map_err(cerr)?;
        let opt = |c: Option<u8>| c.map(|v| v.to_string()).unwrap_or_default();
        for s in series {
            for (layer, (v, n)) in s.values.iter().zip(&s.counts).enumerate() {
                w.write_record([
                    s.network.clone(),
                    s.analysis.clone(),
                    s.attack.clone(),
                    opt(s.original),
                    opt(s.predicted),
                    layer.to_string(),
                    format_value(*v),
                    n.to_string(),
                ])
                .map_err(cerr)?;
            }
        }
        w.flush().map_err(io)?;
    }
    std::fs::write(path, buf).map_err(io)
}

/// Reads series written by [`write_series_csv`]; consecutive rows with the same
/// key form one series.
pub fn read_series_csv(path: &Path) -> Result<Vec<AnalysisSeries>, GeometryError> {
    let text = std::fs::read_to_string(path).map_err(|e| GeometryError::Io(format!("{}: {e}", path.display())))?;
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let bad = |m: String| GeometryError::Io(format!("{}: {m}", path.display()));
    let mut out: Vec<AnalysisSeries> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != SERIES_HEADER.len() {
            return Err(bad("wrong column count".into()));
        }
        let class = |s: &str| -> Result<Option<u8>, GeometryError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(format!("bad class `{s}`")))
            }
        };
        let (o, p) = (class(&rec[3])?, class(&rec[4])?);
        let value: f64 = rec[6].parse().map_err(|_| bad(format!("bad value `{}`", &rec[6])))?;
        let n: usize = rec[7].parse().map_err(|_| bad(format!("bad count `{}`", &rec[7])))?;
        let same = out.last().is_some_and(|s| {
            s.network == rec[0] && s.analysis == rec[1] && s.attack == rec[2] && s.original == o && s.predicted == p
        });
        if !same {
            out.push(AnalysisSeries {
                network: rec[0].to_string(),
                analysis: rec[1].to_string(),
                attack: rec[2].to_string(),
                original: o,
                predicted: p,
                values: Vec::new(),
                counts: Vec::new(),
            });
        }
        let s = out.last_mut().expect("pushed above");
        s.values.push(value);
        s.counts.push(n);
    }
    Ok(out)
}
