//! 2-D embeddings, SVG plots, and CSV tables.

mod pca;
mod svg;

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::attacks::{AttackKind, CorpusManifest, NormKind};
use crate::geometry::{format_value, write_series_csv, AnalysisSeries};

pub use pca::embed_pca;
pub use svg::{line_plot_svg, scatter_svg, stratified_subsample, SCATTER_CAP};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Io(String),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ReportError + '_ {
    move |e| ReportError::Io(format!("{}: {e}", path.display()))
}

/// Points of one layer in the plane, one per input, with a source tag each.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding2D {
    pub layer: usize,
    pub points: Vec<[f64; 2]>,
    pub tags: Vec<String>,
    pub method: String,
    /// Set when the input had rank zero and every point sits at the origin.
    pub degenerate: bool,
}

/// Builds an embedding from externally computed coordinates in an `id,x,y` CSV.
/// Points follow the order of `ids`; every id must be present exactly once.
pub fn import_embedding_csv(
    path: &Path,
    layer: usize,
    ids: &[String],
    tags: &[String],
) -> Result<Embedding2D, ReportError> {
    if ids.len() != tags.len() {
        return Err(ReportError::Input("one tag per id required".into()));
    }
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| ReportError::Io(format!("{}: {e}", path.display())))?;
    let bad = |m: String| ReportError::Input(format!("{}: {m}", path.display()));
    let mut coords: HashMap<String, [f64; 2]> = HashMap::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 3 {
            return Err(bad("expected columns id,x,y".into()));
        }
        let num = |s: &str| -> Result<f64, ReportError> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("bad coordinate `{s}`")))
        };
        let p = [num(&rec[1])?, num(&rec[2])?];
        if coords.insert(rec[0].to_string(), p).is_some() {
            return Err(bad(format!("duplicate id `{}`", &rec[0])));
        }
    }
    let points = ids
        .iter()
        .map(|id| coords.get(id).copied().ok_or_else(|| bad(format!("missing id `{id}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Embedding2D {
        layer,
        points,
        tags: tags.to_vec(),
        method: "import".into(),
        degenerate: false,
    })
}

pub fn emit_scatter_svg(embedding: &Embedding2D, title: &str, path: &Path) -> Result<(), ReportError> {
    std::fs::write(path, scatter_svg(embedding, title)).map_err(io_err(path))
}

/// Mean perturbation norms of the successful records of one corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormMeans {
    pub attack: AttackKind,
    pub count: usize,
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

impl NormMeans {
    pub fn get(&self, norm: NormKind) -> f64 {
        match norm {
            NormKind::L0 => self.l0,
            NormKind::L1 => self.l1,
            NormKind::L2 => self.l2,
            NormKind::LInf => self.linf,
        }
    }
}

/// `None` when the corpus has no successful record.
pub fn norm_means(manifest: &CorpusManifest) -> Option<NormMeans> {
    let ok: Vec<_> = manifest.records.iter().filter(|r| r.success).collect();
    if ok.is_empty() {
        return None;
    }
    let n = ok.len() as f64;
    let mean = |f: &dyn Fn(&crate::attacks::Norms) -> f64| ok.iter().map(|r| f(&r.norms)).sum::<f64>() / n;
    Some(NormMeans {
        attack: manifest.attack,
        count: ok.len(),
        l0: mean(&|m| m.l0 as f64),
        l1: mean(&|m| m.l1),
        l2: mean(&|m| m.l2),
        linf: mean(&|m| m.linf),
    })
}

/// For each norm column, whether the attack constrained on that norm has the
/// smallest mean among the given rows. Columns whose attack is absent are `None`.
pub fn diagonal_minimum(rows: &[NormMeans]) -> Vec<(NormKind, Option<bool>)> {
    [NormKind::L0, NormKind::L1, NormKind::L2, NormKind::LInf]
        .into_iter()
        .map(|norm| {
            let own = rows.iter().find(|r| r.attack.norm() == Some(norm));
            let verdict = own.map(|o| {
                rows.iter()
                    .filter(|r| r.attack.norm().is_some() && r.attack != o.attack)
                    .all(|r| o.get(norm) < r.get(norm))
            });
            (norm, verdict)
        })
        .collect()
}

fn csv_bytes(preamble: &[String], header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, ReportError> {
    let mut buf = Vec::new();
    for line in preamble {
        writeln!(buf, "# {line}").map_err(|e| ReportError::Io(e.to_string()))?;
    }
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
        let err = |e: csv::Error| ReportError::Io(e.to_string());
        w.write_record(header).map_err(err)?;
        for row in rows {
            w.write_record(row).map_err(err)?;
        }
        w.flush().map_err(|e| ReportError::Io(e.to_string()))?;
    }
    Ok(buf)
}

pub const NORM_TABLE_HEADER: [&str; 6] = ["attack", "n", "l0", "l1", "l2", "linf"];

/// Attack-by-norm means; corpora without successes contribute no row.
pub fn write_norm_table(path: &Path, preamble: &[String], manifests: &[&CorpusManifest]) -> Result<(), ReportError> {
    let rows: Vec<Vec<String>> = manifests
        .iter()
        .filter_map(|m| norm_means(m))
        .map(|m| {
            vec![
                m.attack.to_string(),
                m.count.to_string(),
                format_value(m.l0),
                format_value(m.l1),
                format_value(m.l2),
                format_value(m.linf),
            ]
        })
        .collect();
    let bytes = csv_bytes(preamble, &NORM_TABLE_HEADER, &rows)?;
    std::fs::write(path, bytes).map_err(io_err(path))
}

/// Row `C_o`, columns `C_p`: counts of successful records. Rubbish corpora,
/// which have no original class, yield a header-only file.
pub fn write_confusion_csv(path: &Path, preamble: &[String], manifest: &CorpusManifest) -> Result<(), ReportError> {
    let classes = manifest.counts.len();
    let mut header = vec!["C_o".to_string()];
    header.extend((0..classes).map(|c| c.to_string()));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = if manifest.attack.is_rubbish() || manifest.counts.iter().flatten().all(|&c| c == 0) {
        Vec::new()
    } else {
        manifest
            .counts
            .iter()
            .enumerate()
            .map(|(o, row)| std::iter::once(o.to_string()).chain(row.iter().map(u32::to_string)).collect())
            .collect()
    };
    let bytes = csv_bytes(preamble, &header_refs, &rows)?;
    std::fs::write(path, bytes).map_err(io_err(path))
}

/// Writes `norms.csv`, `confusion-<attack>.csv` per corpus, and for each
/// analysis kind found in `series` a `<analysis>.csv` with its `<analysis>.svg`.
/// Returns the written file names in write order.
pub fn emit_tables(
    dir: &Path,
    preamble: &[String],
    manifests: &[&CorpusManifest],
    series: &[AnalysisSeries],
) -> Result<Vec<String>, ReportError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    write_norm_table(&dir.join("norms.csv"), preamble, manifests)?;
    written.push("norms.csv".to_string());
    for m in manifests {
        let name = format!("confusion-{}.csv", m.attack);
        write_confusion_csv(&dir.join(&name), preamble, m)?;
        written.push(name);
    }
    let mut kinds: Vec<&str> = series.iter().map(|s| s.analysis.as_str()).collect();
    kinds.sort_unstable();
    kinds.dedup();
    for kind in kinds {
        let group: Vec<AnalysisSeries> = series.iter().filter(|s| s.analysis == kind).cloned().collect();
        let csv_name = format!("{kind}.csv");
        let path = dir.join(&csv_name);
        write_series_csv(&path, preamble, &group).map_err(|e| ReportError::Io(e.to_string()))?;
        written.push(csv_name);
        let svg_name = format!("{kind}.svg");
        let path = dir.join(&svg_name);
        std::fs::write(&path, line_plot_svg(&group, kind)).map_err(io_err(&path))?;
        written.push(svg_name);
    }
    Ok(written)
}
