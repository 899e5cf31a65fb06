//! Per-layer analyses of adversarial activations against the training set.
//!
//! Every function takes its queries layer-major: `queries[l]` holds one
//! activation row per adversarial example at layer `l`, aligned with the
//! reference index `train[l]`.

use rayon::prelude::*;

use super::hull::project_to_hull;
use super::GeometryError;
use crate::atlas::LayerIndex;

fn check_layers(queries: &[Vec<&[f32]>], train: &[LayerIndex]) -> Result<(), GeometryError> {
    if queries.len() != train.len() {
        return Err(GeometryError::Dimension);
    }
    for (q, idx) in queries.iter().zip(train) {
        if q.iter().any(|row| row.len() != idx.dim()) {
            return Err(GeometryError::Dimension);
        }
    }
    Ok(())
}

/// Mean distances from `q` to the training rows of `c_o`, of `c_p`, and of every other class.
fn class_means(index: &LayerIndex, q: &[f32], c_o: u8, c_p: u8) -> [f64; 3] {
    let mut sums = [0.0f64; 3];
    let mut counts = [0usize; 3];
    for (i, &label) in index.labels().iter().enumerate() {
        let slot = if label == c_o {
            0
        } else if label == c_p {
            1
        } else {
            2
        };
        sums[slot] += crate::atlas::distance(q, index.row(i));
        counts[slot] += 1;
    }
    let mut out = [f64::NAN; 3];
    for s in 0..3 {
        if counts[s] > 0 {
            out[s] = sums[s] / counts[s] as f64;
        }
    }
    out
}

/// Per layer: mean over queries of the average distance to classes `c_o`, `c_p`
/// and the remaining classes, in that order.
pub fn class_distance_profile(
    queries: &[Vec<&[f32]>],
    train: &[LayerIndex],
    c_o: u8,
    c_p: u8,
) -> Result<Vec<[f64; 3]>, GeometryError> {
    check_layers(queries, train)?;
    if queries.first().is_none_or(|q| q.is_empty()) {
        return Err(GeometryError::Empty("class distance profile needs at least one query"));
    }
    Ok(queries
        .iter()
        .zip(train)
        .map(|(rows, index)| {
            let per: Vec<[f64; 3]> = rows.par_iter().map(|q| class_means(index, q, c_o, c_p)).collect();
            let mut acc = [0.0; 3];
            for p in &per {
                for s in 0..3 {
                    acc[s] += p[s];
                }
            }
            acc.map(|v| v / per.len() as f64)
        })
        .collect())
}

/// Per layer: mean fraction of the `k` nearest training rows of class `c_o` or
/// `c_p` that belong to `c_o`.
pub fn knn_ratio(
    queries: &[Vec<&[f32]>],
    train: &[LayerIndex],
    c_o: u8,
    c_p: u8,
    k: usize,
) -> Result<Vec<f64>, GeometryError> {
    check_layers(queries, train)?;
    if queries.first().is_none_or(|q| q.is_empty()) {
        return Err(GeometryError::Empty("knn ratio needs at least one query"));
    }
    let filter = [c_o, c_p];
    queries
        .iter()
        .zip(train)
        .map(|(rows, index)| {
            let ratios: Result<Vec<f64>, GeometryError> = rows
                .par_iter()
                .map(|q| {
                    let nn = index.knn_query(q, k, Some(&filter))?;
                    Ok(nn.iter().filter(|n| n.label == c_o).count() as f64 / k as f64)
                })
                .collect();
            let ratios = ratios?;
            Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
        })
        .collect()
}

/// Input-space distances to the `c_o` and `c_p` manifolds, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldDistances {
    pub to_original: Vec<f64>,
    pub to_predicted: Vec<f64>,
    /// Queries contributing at each layer.
    pub counts: Vec<usize>,
    /// Queries dropped at each layer because a projection did not converge.
    pub skipped: Vec<usize>,
}

/// Layer-comparable manifold distances.
///
/// For each layer and query: project the activation onto the hull of its `k`
/// nearest training activations (all classes), carry the hull weights over to
/// the corresponding training images, and measure how far that image-space
/// combination lies from the hulls of its `k` nearest training images of `c_o`
/// and of `c_p`. `images` must index the same training rows as `train`.
pub fn layerwise_manifold_distance(
    queries: &[Vec<&[f32]>],
    train: &[LayerIndex],
    images: &LayerIndex,
    c_o: u8,
    c_p: u8,
    k: usize,
) -> Result<ManifoldDistances, GeometryError> {
    check_layers(queries, train)?;
    if train.iter().any(|t| t.len() != images.len()) {
        return Err(GeometryError::Dimension);
    }
    let mut out = ManifoldDistances {
        to_original: Vec::new(),
        to_predicted: Vec::new(),
        counts: Vec::new(),
        skipped: Vec::new(),
    };
    for (rows, index) in queries.iter().zip(train) {
        let per: Vec<Result<Option<(f64, f64)>, GeometryError>> = rows
            .par_iter()
            .map(|q| {
                let nn = index.knn_query(q, k, None)?;
                let pts: Vec<&[f32]> = nn.iter().map(|n| index.row(n.index)).collect();
                let ids: Vec<usize> = nn.iter().map(|n| n.index).collect();
                let x: Vec<f64> = q.iter().map(|&v| v as f64).collect();
                let hull = match project_to_hull(&x, &pts, &ids) {
                    Ok(h) => h,
                    Err(GeometryError::NotConverged { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                };
                let mut combo = vec![0.0f64; images.dim()];
                for (&i, &a) in hull.indices.iter().zip(&hull.alpha) {
                    if a != 0.0 {
                        for (c, &v) in combo.iter_mut().zip(images.row(i)) {
                            *c += a * v as f64;
                        }
                    }
                }
                let query: Vec<f32> = combo.iter().map(|&v| v as f32).collect();
                let mut dist = [0.0f64; 2];
                for (slot, class) in [c_o, c_p].into_iter().enumerate() {
                    let nn = images.knn_query(&query, k, Some(&[class]))?;
                    let pts: Vec<&[f32]> = nn.iter().map(|n| images.row(n.index)).collect();
                    let ids: Vec<usize> = nn.iter().map(|n| n.index).collect();
                    match project_to_hull(&combo, &pts, &ids) {
                        Ok(h) => dist[slot] = h.distance,
                        Err(GeometryError::NotConverged { .. }) => return Ok(None),
                        Err(e) => return Err(e),
                    }
                }
                Ok(Some((dist[0], dist[1])))
            })
            .collect();
        let mut sums = (0.0, 0.0);
        let mut count = 0usize;
        let mut skipped = 0usize;
        for r in per {
            match r? {
                Some((a, b)) => {
                    sums.0 += a;
                    sums.1 += b;
                    count += 1;
                }
                None => skipped += 1,
            }
        }
        let mean = |s: f64| if count > 0 { s / count as f64 } else { f64::NAN };
        out.to_original.push(mean(sums.0));
        out.to_predicted.push(mean(sums.1));
        out.counts.push(count);
        out.skipped.push(skipped);
    }
    Ok(out)
}
