//! Greedy single-pixel attack bounded by a pixel budget.
//!
//! Each iteration takes the untouched pixel with the largest absolute
//! cross-entropy gradient (summed over channels) and sets it to the grid value
//! that minimises the true-class probability. Multi-channel pixels are searched
//! jointly over the product grid.

use super::{check_len, AdversarialRecord, AttackError, AttackKind, L0Config};
use crate::nn::{argmax, softmax, LossKind, Model};

/// `(channels, positions)`; a flat input counts as one channel.
fn layout(model: &Model) -> (usize, usize) {
    let shape = model.input_shape();
    let n = model.input_len();
    if shape.len() == 3 {
        (shape[0], shape[1] * shape[2])
    } else {
        (1, n)
    }
}

/// Every combination of per-channel grid values, channel-major within a candidate.
fn candidate_grid(channels: usize, cfg: &L0Config) -> Vec<Vec<f32>> {
    let g = if channels == 1 { cfg.grid } else { cfg.grid_rgb };
    let values: Vec<f32> = (0..g).map(|k| k as f32 / (g - 1) as f32).collect();
    let mut out = vec![Vec::new()];
    for _ in 0..channels {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Greedy L0 over a batch of `(index, image, label)`.
pub fn l0_greedy_batch(
    model: &Model,
    inputs: &[(usize, &[f32], u8)],
    cfg: &L0Config,
) -> Result<Vec<AdversarialRecord>, AttackError> {
    if cfg.max_pixels == 0 || cfg.grid < 2 || cfg.grid_rgb < 2 {
        return Err(AttackError::InvalidConfig("l0 needs max_pixels >= 1 and grid >= 2".into()));
    }
    for &(_, x, _) in inputs {
        check_len(model, x)?;
    }
    let n = model.input_len();
    let classes = model.classes();
    let (channels, positions) = layout(model);
    let grid = candidate_grid(channels, cfg);
    let bsz = inputs.len();
    let mut adv: Vec<f32> = inputs.iter().flat_map(|(_, x, _)| x.iter().copied()).collect();
    let mut used = vec![vec![false; positions]; bsz];
    let mut done = vec![false; bsz];
    let mut logits = model.logits_batch(&adv, bsz)?;
    for _ in 0..cfg.max_pixels {
        for (b, &(_, _, label)) in inputs.iter().enumerate() {
            if argmax(&logits[b * classes..(b + 1) * classes]) != label as usize {
                done[b] = true;
            }
        }
        let active: Vec<usize> = (0..bsz).filter(|&b| !done[b]).collect();
        if active.is_empty() {
            break;
        }
        let act_x: Vec<f32> = active.iter().flat_map(|&b| adv[b * n..(b + 1) * n].iter().copied()).collect();
        let losses: Vec<LossKind> = active
            .iter()
            .map(|&b| LossKind::CrossEntropy { label: inputs[b].2 as usize })
            .collect();
        let (_, _, grads) = model.loss_input_gradients(&act_x, &losses)?;
        let mut picks = Vec::with_capacity(active.len());
        for (a, &b) in active.iter().enumerate() {
            let g = &grads[a * n..(a + 1) * n];
            let mut best: Option<(usize, f32)> = None;
            for pos in (0..positions).filter(|&p| !used[b][p]) {
                let mag: f32 = (0..channels).map(|c| g[c * positions + pos].abs()).sum();
                if best.is_none_or(|(_, m)| mag > m) {
                    best = Some((pos, mag));
                }
            }
            picks.push(best.map(|(p, _)| p));
        }
        let mut cand = Vec::with_capacity(active.len() * grid.len() * n);
        for (a, &b) in active.iter().enumerate() {
            let base = &adv[b * n..(b + 1) * n];
            for values in &grid {
                let start = cand.len();
                cand.extend_from_slice(base);
                if let Some(pos) = picks[a] {
                    for (c, &v) in values.iter().enumerate() {
                        cand[start + c * positions + pos] = v;
                    }
                }
            }
        }
        let cand_logits = model.logits_batch(&cand, active.len() * grid.len())?;
        for (a, &b) in active.iter().enumerate() {
            let Some(pos) = picks[a] else {
                done[b] = true;
                continue;
            };
            used[b][pos] = true;
            let label = inputs[b].2 as usize;
            let mut best = (0usize, f32::INFINITY);
            for k in 0..grid.len() {
                let row = &cand_logits[(a * grid.len() + k) * classes..(a * grid.len() + k + 1) * classes];
                let p = softmax(row)[label];
                if p < best.1 {
                    best = (k, p);
                }
            }
            for (c, &v) in grid[best.0].iter().enumerate() {
                adv[b * n + c * positions + pos] = v;
            }
            let row = (a * grid.len() + best.0) * classes;
            logits[b * classes..(b + 1) * classes].copy_from_slice(&cand_logits[row..row + classes]);
        }
    }
    Ok(inputs
        .iter()
        .enumerate()
        .map(|(b, &(index, x, label))| {
            AdversarialRecord::build(
                model,
                index,
                AttackKind::GreedyL0,
                x.to_vec(),
                adv[b * n..(b + 1) * n].to_vec(),
                Some(label),
                None,
                None,
                &logits[b * classes..(b + 1) * classes],
            )
        })
        .collect())
}

pub fn l0_greedy_attack(model: &Model, x: &[f32], label: u8, cfg: &L0Config) -> Result<AdversarialRecord, AttackError> {
    Ok(l0_greedy_batch(model, &[(0, x, label)], cfg)?.pop().expect("one record"))
}
