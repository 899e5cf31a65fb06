//! Soft nearest neighbour loss and its temperature.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::seed::item_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnnConfig {
    /// Initial temperature, in units of the batch's mean squared pairwise distance.
    pub temperature: f64,
    pub batch_size: usize,
    /// Initial step on `log T`; adapted by backtracking.
    pub learning_rate: f64,
    pub steps: usize,
    pub runs: usize,
}

impl Default for SnnConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            batch_size: 256,
            learning_rate: 0.5,
            steps: 100,
            runs: 4,
        }
    }
}

impl SnnConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(GeometryError::Config("snn temperature must be > 0".into()));
        }
        if self.batch_size < 2 {
            return Err(GeometryError::Config("snn batch_size must be >= 2".into()));
        }
        if self.runs == 0 {
            return Err(GeometryError::Config("snn runs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Pairwise squared Euclidean distances of `rows` (`dim` values each), `f64`.
pub fn squared_distances(rows: &[&[f32]]) -> Vec<f64> {
    let b = rows.len();
    let mut d = vec![0.0; b * b];
    for i in 0..b {
        for j in i + 1..b {
            let v: f64 = rows[i]
                .iter()
                .zip(rows[j])
                .map(|(&x, &y)| {
                    let t = x as f64 - y as f64;
                    t * t
                })
                .sum();
            d[i * b + j] = v;
            d[j * b + i] = v;
        }
    }
    d
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Rows whose label occurs at least twice in the batch.
fn included(labels: &[usize]) -> Vec<usize> {
    (0..labels.len())
        .filter(|&i| labels.iter().enumerate().any(|(j, &l)| j != i && l == labels[i]))
        .collect()
}

/// Loss and `d loss / d log T` from squared distances.
fn loss_and_grad(d: &[f64], labels: &[usize], t: f64) -> Result<(f64, f64), GeometryError> {
    let b = labels.len();
    let rows = included(labels);
    if rows.is_empty() {
        return Err(GeometryError::Empty("no batch member shares its class with another"));
    }
    let mut loss = 0.0;
    let mut grad = 0.0;
    for &i in &rows {
        let row = &d[i * b..(i + 1) * b];
        let others = (0..b).filter(move |&j| j != i);
        let same = others.clone().filter(|&j| labels[j] == labels[i]);
        let num = log_sum_exp(same.clone().map(|j| -row[j] / t));
        let den = log_sum_exp(others.clone().map(|j| -row[j] / t));
        loss -= num - den;
        // expectations of d under the softmax weights of numerator and denominator
        let e_num: f64 = same.map(|j| (-row[j] / t - num).exp() * row[j]).sum();
        let e_den: f64 = others.map(|j| (-row[j] / t - den).exp() * row[j]).sum();
        grad += (e_den - e_num) / t;
    }
    let n = rows.len() as f64;
    Ok((loss / n, grad / n))
}

/// SNN loss from precomputed squared distances (`b x b`, row-major).
pub fn snn_loss_from_distances(d: &[f64], labels: &[usize], t: f64) -> Result<f64, GeometryError> {
    if labels.len() < 2 || d.len() != labels.len() * labels.len() {
        return Err(GeometryError::Dimension);
    }
    if !(t > 0.0) {
        return Err(GeometryError::Config("temperature must be > 0".into()));
    }
    Ok(loss_and_grad(d, labels, t)?.0)
}

/// Soft nearest neighbour loss of `points` with class `labels` at temperature `t`.
///
/// Points whose class has no other member are left out of the mean.
pub fn snn_loss(points: &[&[f32]], labels: &[usize], t: f64) -> Result<f64, GeometryError> {
    if points.len() != labels.len() {
        return Err(GeometryError::Dimension);
    }
    snn_loss_from_distances(&squared_distances(points), labels, t)
}

/// Gradient descent on `log T` with backtracking; the best temperature seen is returned
/// with its loss, so the loss never exceeds the one at `t0`.
pub fn optimize_temperature_from_distances(
    d: &[f64],
    labels: &[usize],
    t0: f64,
    steps: usize,
    lr: f64,
) -> Result<(f64, f64), GeometryError> {
    if labels.len() < 2 || d.len() != labels.len() * labels.len() {
        return Err(GeometryError::Dimension);
    }
    if !(t0 > 0.0 && t0.is_finite()) {
        return Err(GeometryError::Config("initial temperature must be > 0".into()));
    }
    let mut u = t0.ln();
    let (mut f, mut g) = loss_and_grad(d, labels, u.exp())?;
    let mut step = lr.max(1e-12);
    for _ in 0..steps {
        if g == 0.0 || !g.is_finite() {
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let cand = u - step * g;
            let (fc, gc) = loss_and_grad(d, labels, cand.exp())?;
            if fc.is_finite() && fc <= f - 1e-4 * step * g * g {
                u = cand;
                f = fc;
                g = gc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step *= 2.0;
    }
    Ok((u.exp(), f))
}

pub fn optimize_temperature(
    points: &[&[f32]],
    labels: &[usize],
    t0: f64,
    steps: usize,
    lr: f64,
) -> Result<(f64, f64), GeometryError> {
    if points.len() != labels.len() {
        return Err(GeometryError::Dimension);
    }
    optimize_temperature_from_distances(&squared_distances(points), labels, t0, steps, lr)
}

/// Minimised SNN loss between a malicious set and a clean set for every layer,
/// averaged over `cfg.runs` balanced batches.
///
/// `malicious[l]` and `clean[l]` are row-major matrices with `dims[l]` columns.
/// Each run draws one set of rows used for every layer. Returns per-layer
/// `(mean loss, batch size)`.
pub fn entanglement(
    malicious: &[&[f32]],
    clean: &[&[f32]],
    dims: &[usize],
    cfg: &SnnConfig,
    seed: u64,
) -> Result<Vec<(f64, usize)>, GeometryError> {
    cfg.validate()?;
    if malicious.len() != dims.len() || clean.len() != dims.len() {
        return Err(GeometryError::Dimension);
    }
    let n_mal = malicious.first().map_or(0, |m| m.len() / dims[0].max(1));
    let n_clean = clean.first().map_or(0, |c| c.len() / dims[0].max(1));
    let half = (cfg.batch_size / 2).min(n_mal).min(n_clean);
    if half < 2 {
        return Err(GeometryError::Empty("entanglement needs at least two rows per group"));
    }
    let mut labels = vec![0usize; half];
    labels.extend(std::iter::repeat_n(1usize, half));
    let mut totals = vec![0.0f64; dims.len()];
    for run in 0..cfg.runs {
        let mut rng = ChaCha8Rng::seed_from_u64(item_seed(seed, run as u64));
        let mut pick_mal = sample(&mut rng, n_mal, half).into_vec();
        let mut pick_clean = sample(&mut rng, n_clean, half).into_vec();
        pick_mal.sort_unstable();
        pick_clean.sort_unstable();
        for (l, &dim) in dims.iter().enumerate() {
            let mut rows: Vec<&[f32]> = pick_mal.iter().map(|&i| &malicious[l][i * dim..(i + 1) * dim]).collect();
            rows.extend(pick_clean.iter().map(|&i| &clean[l][i * dim..(i + 1) * dim]));
            let d = squared_distances(&rows);
            let b = rows.len();
            let mean_sq = d.iter().sum::<f64>() / (b * (b - 1)) as f64;
            let t0 = cfg.temperature * if mean_sq > 0.0 { mean_sq } else { 1.0 };
            let (_, loss) = optimize_temperature_from_distances(&d, &labels, t0, cfg.steps, cfg.learning_rate)?;
            totals[l] += loss;
        }
    }
    Ok(totals
        .into_iter()
        .map(|t| (t / cfg.runs as f64, 2 * half))
        .collect())
}
