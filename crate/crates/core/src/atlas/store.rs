//! Trace store: one binary file per layer plus a CSV table of row metadata.
//!
//! Layer file: magic `ADVMAPTR`, u32 layer id, u64 rows, u64 dim, then
//! `rows * dim` little-endian f32.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAGIC: &[u8; 8] = b"ADVMAPTR";
const HEADER: usize = 8 + 4 + 8 + 8;

#[derive(Debug, Error)]
pub enum TraceStoreError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Row metadata shared by every layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub id: usize,
    /// Class used for filtered neighbour queries; empty for unlabelled rows.
    pub label: Option<u8>,
    /// `train`, `test`, an attack id, or a rubbish variant.
    pub source: String,
}

/// Captured activations of a set of inputs, stored layer-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStore {
    pub dims: Vec<usize>,
    /// `layers[l]` is row-major `[meta.len(), dims[l]]`.
    pub layers: Vec<Vec<f32>>,
    pub meta: Vec<TraceMeta>,
}

impl TraceStore {
    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn row(&self, layer: usize, i: usize) -> &[f32] {
        let d = self.dims[layer];
        &self.layers[layer][i * d..(i + 1) * d]
    }
}

fn layer_path(dir: &Path, name: &str, layer: usize) -> PathBuf {
    dir.join(format!("{name}.layer{layer}.bin"))
}

fn meta_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.csv"))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> TraceStoreError + '_ {
    move |e| TraceStoreError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> TraceStoreError {
    TraceStoreError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn write_traces(dir: &Path, name: &str, store: &TraceStore) -> Result<(), TraceStoreError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let rows = store.len();
    for (l, (data, &dim)) in store.layers.iter().zip(&store.dims).enumerate() {
        let path = layer_path(dir, name, l);
        let f = fs::File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(f);
        let mut header = Vec::with_capacity(HEADER);
        header.extend_from_slice(MAGIC);
        header.extend_from_slice(&(l as u32).to_le_bytes());
        header.extend_from_slice(&(rows as u64).to_le_bytes());
        header.extend_from_slice(&(dim as u64).to_le_bytes());
        w.write_all(&header).map_err(io_err(&path))?;
        for v in data {
            w.write_all(&v.to_le_bytes()).map_err(io_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    let path = meta_path(dir, name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| format_err(&path, e.to_string()))?;
    w.write_record(["id", "label", "source"]).map_err(|e| format_err(&path, e.to_string()))?;
    for m in &store.meta {
        let label = m.label.map(|l| l.to_string()).unwrap_or_default();
        w.write_record([m.id.to_string(), label, m.source.clone()])
            .map_err(|e| format_err(&path, e.to_string()))?;
    }
    w.flush().map_err(io_err(&path))
}

pub fn read_trace_meta(dir: &Path, name: &str) -> Result<Vec<TraceMeta>, TraceStoreError> {
    let path = meta_path(dir, name);
    let mut r = csv::Reader::from_path(&path).map_err(|e| format_err(&path, e.to_string()))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| format_err(&path, e.to_string()))?;
        if rec.len() != 3 {
            return Err(format_err(&path, "expected 3 columns"));
        }
        let id = rec[0].parse().map_err(|_| format_err(&path, "bad id"))?;
        let label = match &rec[1] {
            "" => None,
            s => Some(s.parse().map_err(|_| format_err(&path, "bad label"))?),
        };
        out.push(TraceMeta {
            id,
            label,
            source: rec[2].to_string(),
        });
    }
    Ok(out)
}

/// Reads one layer without touching the others. Returns `(dim, rows)`.
pub fn read_layer(dir: &Path, name: &str, layer: usize) -> Result<(usize, Vec<f32>), TraceStoreError> {
    let path = layer_path(dir, name, layer);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return Err(format_err(&path, "not a trace layer file"));
    }
    let id = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let rows = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let dim = u64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes"));
    if id != layer {
        return Err(format_err(&path, format!("layer id {id}, expected {layer}")));
    }
    let expected = rows
        .checked_mul(dim)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| format_err(&path, "size overflow"))?;
    if (bytes.len() - HEADER) as u64 != expected {
        return Err(format_err(&path, "payload size does not match header"));
    }
    let data = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((dim as usize, data))
}

/// Reads the metadata and `layers` layers.
pub fn read_traces(dir: &Path, name: &str, layers: usize) -> Result<TraceStore, TraceStoreError> {
    let meta = read_trace_meta(dir, name)?;
    let mut dims = Vec::with_capacity(layers);
    let mut data = Vec::with_capacity(layers);
    for l in 0..layers {
        let (dim, rows) = read_layer(dir, name, l)?;
        if rows.len() != dim * meta.len() {
            return Err(format_err(&layer_path(dir, name, l), "row count differs from metadata"));
        }
        dims.push(dim);
        data.push(rows);
    }
    Ok(TraceStore {
        dims,
        layers: data,
        meta,
    })
}
