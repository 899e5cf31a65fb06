//! Independent reference implementations shared by the integration and acceptance tests.
#![allow(dead_code)]

use advmap_core::nn::{input_gradient, LayerSpec, LossKind, Model};
use advmap_core::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Plain nested-loop forward pass in f64 over the model's f32 parameters.
pub fn reference_logits(model: &Model, x: &[f64]) -> Vec<f64> {
    let mut shape = model.input_shape().to_vec();
    let mut a = x.to_vec();
    for (layer, params) in model.layers().iter().zip(model.params()) {
        match *layer {
            LayerSpec::Dense { units } => {
                let p = params.as_ref().unwrap();
                let (w, b) = (p.weight.data(), p.bias.data());
                let n = a.len();
                a = (0..units)
                    .map(|u| b[u] as f64 + (0..n).map(|i| w[u * n + i] as f64 * a[i]).sum::<f64>())
                    .collect();
                shape = vec![units];
            }
            LayerSpec::Conv2d {
                filters,
                kernel,
                stride,
                padding,
            } => {
                let p = params.as_ref().unwrap();
                let (w, b) = (p.weight.data(), p.bias.data());
                let (c, h, wd) = (shape[0], shape[1], shape[2]);
                let oh = (h + 2 * padding - kernel) / stride + 1;
                let ow = (wd + 2 * padding - kernel) / stride + 1;
                let mut y = vec![0.0; filters * oh * ow];
                for f in 0..filters {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut s = b[f] as f64;
                            for ch in 0..c {
                                for ky in 0..kernel {
                                    for kx in 0..kernel {
                                        let iy = (oy * stride + ky) as isize - padding as isize;
                                        let ix = (ox * stride + kx) as isize - padding as isize;
                                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                            continue;
                                        }
                                        let wi = f * c * kernel * kernel + (ch * kernel + ky) * kernel + kx;
                                        s += w[wi] as f64 * a[(ch * h + iy as usize) * wd + ix as usize];
                                    }
                                }
                            }
                            y[(f * oh + oy) * ow + ox] = s;
                        }
                    }
                }
                a = y;
                shape = vec![filters, oh, ow];
            }
            LayerSpec::Relu => a.iter_mut().for_each(|v| *v = v.max(0.0)),
            LayerSpec::MaxPool2d { size } => {
                let (c, h, w) = (shape[0], shape[1], shape[2]);
                let (oh, ow) = (h / size, w / size);
                let mut y = vec![f64::NEG_INFINITY; c * oh * ow];
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            for dy in 0..size {
                                for dx in 0..size {
                                    let v = a[(ch * h + oy * size + dy) * w + ox * size + dx];
                                    let o = &mut y[(ch * oh + oy) * ow + ox];
                                    *o = o.max(v);
                                }
                            }
                        }
                    }
                }
                a = y;
                shape = vec![c, oh, ow];
            }
            LayerSpec::Flatten => shape = vec![a.len()],
            LayerSpec::SoftmaxOutput => {}
        }
    }
    a
}

pub fn reference_loss(model: &Model, x: &[f64], loss: LossKind) -> f64 {
    let z = reference_logits(model, x);
    match loss {
        LossKind::CrossEntropy { label } => {
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - z[label]
        }
        LossKind::CwMargin { class, kappa } => {
            let other = z
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != class)
                .map(|(_, &v)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            (z[class] - other).max(-(kappa as f64))
        }
        LossKind::ClassLogit { class } => z[class],
    }
}

/// Central-difference step for gradient checks.
pub const STEP: f64 = 1e-6;

/// `max |analytic - numeric| / max |numeric|` over all input coordinates.
pub fn gradient_relative_error(model: &Model, x: &[f32], loss: LossKind) -> f64 {
    let analytic = input_gradient(model, &Tensor::new(model.input_shape().to_vec(), x.to_vec()).unwrap(), loss).unwrap();
    let base: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..x.len() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[i] += STEP;
        minus[i] -= STEP;
        let numeric = (reference_loss(model, &plus, loss) - reference_loss(model, &minus, loss)) / (2.0 * STEP);
        worst = worst.max((analytic.data()[i] as f64 - numeric).abs());
        scale = scale.max(numeric.abs());
    }
    worst / scale.max(1e-6)
}

pub const GRID: usize = 100;

/// Smallest distance from `x` to `sum a_i p_i` over all grid weights `a_i = n_i / 100`.
pub fn grid_distance(points: &[[f64; 3]; 5], x: [f64; 3]) -> f64 {
    let step = |i: usize| points[i].map(|v| v / GRID as f64);
    let steps: Vec<[f64; 3]> = (0..5).map(step).collect();
    let mut best = f64::INFINITY;
    for a in 0..=GRID {
        for b in 0..=GRID - a {
            for c in 0..=GRID - a - b {
                for d in 0..=GRID - a - b - c {
                    let e = GRID - a - b - c - d;
                    let mut sq = 0.0;
                    for k in 0..3 {
                        let v = a as f64 * steps[0][k]
                            + b as f64 * steps[1][k]
                            + c as f64 * steps[2][k]
                            + d as f64 * steps[3][k]
                            + e as f64 * steps[4][k]
                            - x[k];
                        sq += v * v;
                    }
                    best = best.min(sq);
                }
            }
        }
    }
    best.sqrt()
}

/// Unstabilised textbook form, restricted to points whose class has another member.
pub fn direct_snn(points: &[Vec<f32>], labels: &[usize], t: f64) -> f64 {
    let b = points.len();
    let sq = |i: usize, j: usize| -> f64 {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(&a, &c)| (a as f64 - c as f64).powi(2))
            .sum()
    };
    let mut total = 0.0;
    let mut used = 0;
    for i in 0..b {
        if !(0..b).any(|j| j != i && labels[j] == labels[i]) {
            continue;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for j in (0..b).filter(|&j| j != i) {
            let e = (-sq(i, j) / t).exp();
            den += e;
            if labels[j] == labels[i] {
                num += e;
            }
        }
        total += (num / den).ln();
        used += 1;
    }
    -total / used as f64
}

/// Random structural damage: bit flips, truncation, extension, extreme header words,
/// noise, deletion, insertion.
pub fn mutate(seed_bytes: &[u8], rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut b = seed_bytes.to_vec();
    match rng.random_range(0..7) {
        0 => {
            for _ in 0..rng.random_range(1..8) {
                if !b.is_empty() {
                    let i = rng.random_range(0..b.len());
                    b[i] ^= 1 << rng.random_range(0..8);
                }
            }
        }
        1 => b.truncate(rng.random_range(0..=b.len())),
        2 => b.extend((0..rng.random_range(1..64)).map(|_| rng.random::<u8>())),
        3 => {
            // rewrite one header word with an extreme value
            if b.len() >= 16 {
                let at = 4 * rng.random_range(0..4);
                let v: u32 = [0, 1, u32::MAX, 0x8000_0000, rng.random()][rng.random_range(0..5)];
                b[at..at + 4].copy_from_slice(&v.to_be_bytes());
            }
        }
        4 => b = (0..rng.random_range(0..200)).map(|_| rng.random::<u8>()).collect(),
        5 => {
            if !b.is_empty() {
                let i = rng.random_range(0..b.len());
                b.remove(i);
            }
        }
        _ => {
            if !b.is_empty() {
                let i = rng.random_range(0..b.len());
                b.insert(i, rng.random());
            }
        }
    }
    b
}
