//! Original / adversarial / matched-noise image triples.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::attacks::{perturbation_norms, AdversarialRecord, NormKind};
use crate::seed::item_seed;

/// `noise` differs from `original` by `magnitude` in `norm`, like `adversarial` does.
#[derive(Debug, Clone, PartialEq)]
pub struct Triple {
    pub index: usize,
    pub original_class: u8,
    pub predicted_class: u8,
    pub original: Vec<f32>,
    pub adversarial: Vec<f32>,
    pub noise: Vec<f32>,
    pub norm: NormKind,
    pub magnitude: f64,
}

fn norm_of(kind: NormKind, d: &[f64]) -> f64 {
    match kind {
        NormKind::L0 => d.iter().filter(|v| v.abs() > crate::attacks::L0_TOLERANCE).count() as f64,
        NormKind::L1 => d.iter().map(|v| v.abs()).sum(),
        NormKind::L2 => d.iter().map(|v| v * v).sum::<f64>().sqrt(),
        NormKind::LInf => d.iter().fold(0.0, |m, v| m.max(v.abs())),
    }
}

fn clipped(o: &[f32], eta: &[f64]) -> Vec<f32> {
    o.iter().zip(eta).map(|(&x, &e)| (x as f64 + e).clamp(0.0, 1.0) as f32).collect()
}

fn realised(o: &[f32], r: &[f32]) -> Vec<f64> {
    o.iter().zip(r).map(|(&a, &b)| b as f64 - a as f64).collect()
}

/// Random image at distance `m` from `o` in `kind`, clipped to the box.
///
/// Continuous norms draw a direction (uniform on `[-1, 1]` for L-inf, Gaussian
/// otherwise), scale it to `m`, clip, and rescale up to five times to make up
/// for clipping. L0 redraws `m` randomly chosen coordinates.
pub fn matched_noise(o: &[f32], kind: NormKind, m: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    if m <= 0.0 {
        return o.to_vec();
    }
    let n = o.len();
    if kind == NormKind::L0 {
        let count = (m.round() as usize).min(n);
        let mut out = o.to_vec();
        for i in sample(rng, n, count) {
            loop {
                let v: f32 = rng.random();
                if (v as f64 - o[i] as f64).abs() > crate::attacks::L0_TOLERANCE {
                    out[i] = v;
                    break;
                }
            }
        }
        return out;
    }
    let mut eta: Vec<f64> = match kind {
        NormKind::LInf => (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        _ => (0..n).map(|_| StandardNormal.sample(rng)).collect(),
    };
    let scale = m / norm_of(kind, &eta).max(f64::MIN_POSITIVE);
    eta.iter_mut().for_each(|v| *v *= scale);
    let mut r = clipped(o, &eta);
    for _ in 0..5 {
        let got = norm_of(kind, &realised(o, &r));
        if got <= 0.0 || (got - m).abs() <= 1e-6 * m.max(1.0) {
            break;
        }
        let s = m / got;
        eta.iter_mut().for_each(|v| *v *= s);
        r = clipped(o, &eta);
    }
    r
}

/// One triple per successful record with a known original class; noise
/// for record `i` is drawn with `item_seed(seed, i)`.
pub fn make_triples(records: &[AdversarialRecord], seed: u64) -> Vec<Triple> {
    records
        .iter()
        .filter(|r| r.success)
        .filter_map(|r| {
            let original_class = r.original_class?;
            let norm = r.kind.norm()?;
            let magnitude = norm.of(&perturbation_norms(&r.original, &r.adversarial).ok()?);
            let mut rng = ChaCha8Rng::seed_from_u64(item_seed(seed, r.index as u64));
            let noise = matched_noise(&r.original, norm, magnitude, &mut rng);
            Some(Triple {
                index: r.index,
                original_class,
                predicted_class: r.predicted_class,
                original: r.original.clone(),
                adversarial: r.adversarial.clone(),
                noise,
                norm,
                magnitude,
            })
        })
        .collect()
}
