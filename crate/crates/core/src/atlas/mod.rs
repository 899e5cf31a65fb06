//! Hidden-layer activations of whole datasets and exact k-NN over them.

mod store;
mod vptree;

use std::collections::BinaryHeap;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::nn::{Model, NnError};

pub use store::{read_layer, read_trace_meta, read_traces, write_traces, TraceMeta, TraceStore, TraceStoreError};
pub use vptree::euclidean as distance;
use vptree::{euclidean, Candidate, VpTree};

#[derive(Debug, Error, PartialEq)]
pub enum AtlasError {
    #[error("k must be >= 1")]
    ZeroK,
    #[error("only {available} references match the filter, {k} requested")]
    InsufficientReferences { k: usize, available: usize },
    #[error("query has {found} values, index dimension is {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("{rows} labels for {expected} reference rows")]
    LabelCount { rows: usize, expected: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// One neighbour of a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbour {
    pub index: usize,
    pub label: u8,
    pub distance: f64,
}

/// Captures every capture-layer activation of `count` flattened images.
///
/// Returns one row-major `[count, dim]` matrix per captured layer.
pub fn capture_dataset(model: &Model, images: &[f32], count: usize) -> Result<Vec<Vec<f32>>, AtlasError> {
    const CHUNK: usize = 128;
    let n = model.input_len();
    if images.len() != count * n {
        return Err(AtlasError::Dimension {
            expected: count * n,
            found: images.len(),
        });
    }
    let dims = model.trace_dims();
    let parts: Vec<Result<Vec<Vec<f32>>, NnError>> = images
        .par_chunks(CHUNK * n)
        .map(|chunk| {
            let batch = chunk.len() / n;
            let pass = model.forward_batch(chunk, batch)?;
            Ok(model
                .capture_layers()
                .iter()
                .map(|&l| pass.layer_output(l).to_vec())
                .collect())
        })
        .collect();
    let mut layers: Vec<Vec<f32>> = dims.iter().map(|d| Vec::with_capacity(d * count)).collect();
    for part in parts {
        for (dst, src) in layers.iter_mut().zip(part?) {
            dst.extend_from_slice(&src);
        }
    }
    Ok(layers)
}

/// Reference activations of one layer with their class labels.
///
/// Unfiltered queries use a tree over all rows; class-filtered queries merge
/// the results of per-class trees.
pub struct LayerIndex {
    layer: usize,
    dim: usize,
    data: Arc<Vec<f32>>,
    labels: Vec<u8>,
    all: VpTree,
    per_class: Vec<VpTree>,
    class_sizes: Vec<usize>,
}

impl LayerIndex {
    pub fn new(layer: usize, dim: usize, data: Arc<Vec<f32>>, labels: Vec<u8>) -> Result<Self, AtlasError> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(AtlasError::Dimension {
                expected: dim,
                found: data.len(),
            });
        }
        let rows = data.len() / dim;
        if labels.len() != rows {
            return Err(AtlasError::LabelCount {
                rows: labels.len(),
                expected: rows,
            });
        }
        let classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let mut members = vec![Vec::new(); classes];
        for (i, &l) in labels.iter().enumerate() {
            members[l as usize].push(i);
        }
        let class_sizes = members.iter().map(Vec::len).collect();
        let per_class = members.into_par_iter().map(|m| VpTree::build(&data, dim, m)).collect();
        let all = VpTree::build(&data, dim, (0..rows).collect());
        Ok(Self {
            layer,
            dim,
            data,
            labels,
            all,
            per_class,
            class_sizes,
        })
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn available(&self, filter: Option<&[u8]>) -> usize {
        match filter {
            None => self.len(),
            Some(classes) => {
                let mut seen = [false; 256];
                classes
                    .iter()
                    .filter(|&&c| !std::mem::replace(&mut seen[c as usize], true))
                    .map(|&c| self.class_sizes.get(c as usize).copied().unwrap_or(0))
                    .sum()
            }
        }
    }

    fn check(&self, point: &[f32], k: usize, filter: Option<&[u8]>) -> Result<(), AtlasError> {
        if point.len() != self.dim {
            return Err(AtlasError::Dimension {
                expected: self.dim,
                found: point.len(),
            });
        }
        if k == 0 {
            return Err(AtlasError::ZeroK);
        }
        let available = self.available(filter);
        if available < k {
            return Err(AtlasError::InsufficientReferences { k, available });
        }
        Ok(())
    }

    fn finish(&self, heap: BinaryHeap<Candidate>) -> Vec<Neighbour> {
        heap.into_sorted_vec()
            .into_iter()
            .map(|c| Neighbour {
                index: c.index,
                label: self.labels[c.index],
                distance: c.distance,
            })
            .collect()
    }

    /// Exact `k` nearest rows by linear scan, ascending distance, ties by ascending index.
    pub fn knn_scan(&self, point: &[f32], k: usize, filter: Option<&[u8]>) -> Result<Vec<Neighbour>, AtlasError> {
        self.check(point, k, filter)?;
        let mut heap = BinaryHeap::with_capacity(k + 1);
        for i in 0..self.len() {
            if filter.is_some_and(|f| !f.contains(&self.labels[i])) {
                continue;
            }
            let c = Candidate {
                distance: euclidean(point, self.row(i)),
                index: i,
            };
            if heap.len() < k {
                heap.push(c);
            } else if heap.peek().is_some_and(|w| c < *w) {
                heap.pop();
                heap.push(c);
            }
        }
        Ok(self.finish(heap))
    }

    /// Same contract as [`LayerIndex::knn_scan`], answered by the trees.
    pub fn knn_query(&self, point: &[f32], k: usize, filter: Option<&[u8]>) -> Result<Vec<Neighbour>, AtlasError> {
        self.check(point, k, filter)?;
        let mut heap = BinaryHeap::with_capacity(k + 1);
        match filter {
            None => self.all.search(&self.data, self.dim, point, k, &mut heap),
            Some(classes) => {
                let mut seen = [false; 256];
                for &c in classes {
                    if std::mem::replace(&mut seen[c as usize], true) {
                        continue;
                    }
                    if let Some(tree) = self.per_class.get(c as usize) {
                        tree.search(&self.data, self.dim, point, k, &mut heap);
                    }
                }
            }
        }
        Ok(self.finish(heap))
    }
}
