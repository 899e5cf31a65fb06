//! Carlini-Wagner L2 and elastic-net (EAD) L1 attacks.
//!
//! Both minimise `c * f(x + delta) + penalty(delta)` over the unit box, with
//! `f = max(Z_true - max_{j != true} Z_j, -kappa)` and the constant `c` chosen
//! per input by a log-scale bisection: a round that produces an adversarial
//! lowers the upper bound, a failing round raises the lower bound. The best
//! adversarial seen in any round (smallest penalty norm) is returned.

use super::{check_len, AdversarialRecord, AttackError, AttackKind, CwConfig, EadConfig, NormKind};
use crate::nn::{argmax, max_other, LossKind, Model};

/// `sign(z) * max(|z| - beta, 0)`.
pub fn soft_threshold(z: f32, beta: f32) -> f32 {
    if z > beta {
        z - beta
    } else if z < -beta {
        z + beta
    } else {
        0.0
    }
}

struct Best {
    norm: f64,
    adv: Vec<f32>,
    logits: Vec<f32>,
}

/// Per-input bisection state over `c`.
struct ConstSearch {
    lo: f32,
    hi: f32,
    c: f32,
    found_upper: bool,
}

impl ConstSearch {
    fn new(c_min: f32, c_max: f32) -> Self {
        Self {
            lo: c_min,
            hi: c_max,
            c: (c_min * c_max).sqrt(),
            found_upper: false,
        }
    }

    fn update(&mut self, succeeded: bool) {
        if succeeded {
            self.hi = self.hi.min(self.c);
            self.found_upper = true;
        } else {
            self.lo = self.lo.max(self.c);
        }
        self.c = (self.lo * self.hi).sqrt();
    }
}

fn is_adversarial(logits: &[f32], label: usize, kappa: f32) -> bool {
    let (_, other) = max_other(logits, label);
    argmax(logits) != label && logits[label] - other <= -kappa
}

fn norm_of(kind: NormKind, x: &[f32], adv: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (&a, &b) in x.iter().zip(adv) {
        let d = (b as f64 - a as f64).abs();
        match kind {
            NormKind::L1 => acc += d,
            _ => acc += d * d,
        }
    }
    if kind == NormKind::L1 {
        acc
    } else {
        acc.sqrt()
    }
}

fn track(
    best: &mut Option<Best>,
    kind: NormKind,
    x: &[f32],
    adv: &[f32],
    logits: &[f32],
) {
    let norm = norm_of(kind, x, adv);
    if best.as_ref().is_none_or(|b| norm < b.norm) {
        *best = Some(Best {
            norm,
            adv: adv.to_vec(),
            logits: logits.to_vec(),
        });
    }
}

fn finish(
    model: &Model,
    kind: AttackKind,
    inputs: &[(usize, &[f32], u8)],
    best: Vec<Option<Best>>,
    last_adv: &[f32],
    last_logits: &[f32],
) -> Vec<AdversarialRecord> {
    let n = model.input_len();
    let classes = model.classes();
    inputs
        .iter()
        .zip(best)
        .enumerate()
        .map(|(b, (&(index, x, label), best))| {
            let (adv, logits) = match best {
                Some(best) => (best.adv, best.logits),
                None => (
                    last_adv[b * n..(b + 1) * n].to_vec(),
                    last_logits[b * classes..(b + 1) * classes].to_vec(),
                ),
            };
            AdversarialRecord::build(model, index, kind, x.to_vec(), adv, Some(label), None, None, &logits)
        })
        .collect()
}

/// CW-L2 over a batch, optimising `delta` directly with Adam and projecting
/// `x + delta` back onto the box after every step.
pub fn cw_l2_batch(
    model: &Model,
    inputs: &[(usize, &[f32], u8)],
    cfg: &CwConfig,
) -> Result<Vec<AdversarialRecord>, AttackError> {
    let n = model.input_len();
    let classes = model.classes();
    for &(_, x, _) in inputs {
        check_len(model, x)?;
    }
    let bsz = inputs.len();
    let xs: Vec<f32> = inputs.iter().flat_map(|(_, x, _)| x.iter().copied()).collect();
    let losses: Vec<LossKind> = inputs
        .iter()
        .map(|&(_, _, label)| LossKind::CwMargin {
            class: label as usize,
            kappa: cfg.kappa,
        })
        .collect();
    let mut search: Vec<ConstSearch> = (0..bsz).map(|_| ConstSearch::new(cfg.c_min, cfg.c_max)).collect();
    let mut best: Vec<Option<Best>> = (0..bsz).map(|_| None).collect();
    let mut adv = xs.clone();
    let mut last_logits = Vec::new();
    const B1: f32 = 0.9;
    const B2: f32 = 0.999;
    for _round in 0..cfg.search_rounds.max(1) {
        let mut delta = vec![0.0f32; bsz * n];
        let mut m = vec![0.0f32; bsz * n];
        let mut v = vec![0.0f32; bsz * n];
        let mut succeeded = vec![false; bsz];
        adv.copy_from_slice(&xs);
        for step in 0..=cfg.steps {
            let (logits, _, grads) = model.loss_input_gradients(&adv, &losses)?;
            for (b, &(_, x, label)) in inputs.iter().enumerate() {
                let row = &logits[b * classes..(b + 1) * classes];
                if is_adversarial(row, label as usize, cfg.kappa) {
                    succeeded[b] = true;
                    track(&mut best[b], NormKind::L2, x, &adv[b * n..(b + 1) * n], row);
                }
            }
            if step == cfg.steps {
                last_logits = logits;
                break;
            }
            let t = (step + 1) as i32;
            let (c1, c2) = (1.0 - B1.powi(t), 1.0 - B2.powi(t));
            for (b, &(_, x, _)) in inputs.iter().enumerate() {
                let c = search[b].c;
                let range = b * n..(b + 1) * n;
                let d = &mut delta[range.clone()];
                let dnorm = d.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt() as f32;
                let g = &grads[range.clone()];
                let (mb, vb) = (&mut m[range.clone()], &mut v[range.clone()]);
                let a = &mut adv[range];
                for i in 0..n {
                    let mut gi = c * g[i];
                    if dnorm > 0.0 {
                        gi += d[i] / dnorm;
                    }
                    mb[i] = B1 * mb[i] + (1.0 - B1) * gi;
                    vb[i] = B2 * vb[i] + (1.0 - B2) * gi * gi;
                    let step = cfg.learning_rate * (mb[i] / c1) / ((vb[i] / c2).sqrt() + 1e-8);
                    a[i] = (x[i] + d[i] - step).clamp(0.0, 1.0);
                    d[i] = a[i] - x[i];
                }
            }
        }
        for (s, ok) in search.iter_mut().zip(&succeeded) {
            s.update(*ok);
        }
    }
    Ok(finish(model, AttackKind::CwL2, inputs, best, &adv, &last_logits))
}

/// EAD over a batch: FISTA on the smooth part `c * f + ||delta||^2` followed by
/// soft-thresholding at `beta` and box projection. The L1-smallest success is kept.
pub fn ead_l1_batch(
    model: &Model,
    inputs: &[(usize, &[f32], u8)],
    cfg: &EadConfig,
) -> Result<Vec<AdversarialRecord>, AttackError> {
    let n = model.input_len();
    let classes = model.classes();
    for &(_, x, _) in inputs {
        check_len(model, x)?;
    }
    let bsz = inputs.len();
    let xs: Vec<f32> = inputs.iter().flat_map(|(_, x, _)| x.iter().copied()).collect();
    let losses: Vec<LossKind> = inputs
        .iter()
        .map(|&(_, _, label)| LossKind::CwMargin {
            class: label as usize,
            kappa: cfg.kappa,
        })
        .collect();
    let mut search: Vec<ConstSearch> = (0..bsz).map(|_| ConstSearch::new(cfg.c_min, cfg.c_max)).collect();
    let mut best: Vec<Option<Best>> = (0..bsz).map(|_| None).collect();
    let mut adv = xs.clone();
    let mut last_logits = Vec::new();
    for _round in 0..cfg.search_rounds.max(1) {
        let mut delta = vec![0.0f32; bsz * n];
        let mut slack = vec![0.0f32; bsz * n];
        let mut succeeded = vec![false; bsz];
        adv.copy_from_slice(&xs);
        let mut probe = xs.clone();
        for step in 0..=cfg.steps {
            let logits = model.logits_batch(&adv, bsz)?;
            for (b, &(_, x, label)) in inputs.iter().enumerate() {
                let row = &logits[b * classes..(b + 1) * classes];
                if is_adversarial(row, label as usize, cfg.kappa) {
                    succeeded[b] = true;
                    track(&mut best[b], NormKind::L1, x, &adv[b * n..(b + 1) * n], row);
                }
            }
            if step == cfg.steps {
                last_logits = logits;
                break;
            }
            for i in 0..bsz * n {
                probe[i] = xs[i] + slack[i];
            }
            let (_, _, grads) = model.loss_input_gradients(&probe, &losses)?;
            let lr = cfg.learning_rate * (1.0 - step as f32 / cfg.steps as f32).sqrt();
            let momentum = step as f32 / (step as f32 + 3.0);
            for (b, &(_, x, _)) in inputs.iter().enumerate() {
                let c = search[b].c;
                let range = b * n..(b + 1) * n;
                let (d, y, g, a) = (
                    &mut delta[range.clone()],
                    &mut slack[range.clone()],
                    &grads[range.clone()],
                    &mut adv[range],
                );
                for i in 0..n {
                    let z = y[i] - lr * (c * g[i] + 2.0 * y[i]);
                    let next = (x[i] + soft_threshold(z, cfg.beta)).clamp(0.0, 1.0) - x[i];
                    let ynext = next + momentum * (next - d[i]);
                    y[i] = (x[i] + ynext).clamp(0.0, 1.0) - x[i];
                    d[i] = next;
                    a[i] = x[i] + next;
                }
            }
        }
        for (s, ok) in search.iter_mut().zip(&succeeded) {
            s.update(*ok);
        }
    }
    Ok(finish(model, AttackKind::EadL1, inputs, best, &adv, &last_logits))
}

pub fn cw_l2_attack(model: &Model, x: &[f32], label: u8, cfg: &CwConfig) -> Result<AdversarialRecord, AttackError> {
    Ok(cw_l2_batch(model, &[(0, x, label)], cfg)?.pop().expect("one record"))
}

pub fn ead_l1_attack(model: &Model, x: &[f32], label: u8, cfg: &EadConfig) -> Result<AdversarialRecord, AttackError> {
    Ok(ead_l1_batch(model, &[(0, x, label)], cfg)?.pop().expect("one record"))
}
