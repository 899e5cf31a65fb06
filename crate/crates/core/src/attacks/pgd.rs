use super::{check_len, AdversarialRecord, AttackError, AttackKind};
use crate::nn::{softmax, LossKind, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgdTarget {
    /// Ascend the cross-entropy of the true label.
    Untargeted,
    /// Descend the cross-entropy of the target class.
    Targeted(u8),
}

pub(crate) struct PgdJob<'a> {
    pub x: &'a [f32],
    pub label: u8,
    pub target: PgdTarget,
    pub epsilon: f32,
    pub step: f32,
}

/// Sign-gradient ascent projected onto the L-inf ball and the unit box.
///
/// With `stop_at`, a sample freezes once its target probability reaches that
/// level. Returns `(adversarial, logits)` per job.
pub(crate) fn run_pgd(
    model: &Model,
    jobs: &[PgdJob],
    steps: usize,
    stop_at: Option<f32>,
) -> Result<Vec<(Vec<f32>, Vec<f32>)>, AttackError> {
    let n = model.input_len();
    let classes = model.classes();
    for job in jobs {
        check_len(model, job.x)?;
    }
    let mut adv: Vec<f32> = jobs.iter().flat_map(|j| j.x.iter().copied()).collect();
    let losses: Vec<LossKind> = jobs
        .iter()
        .map(|j| match j.target {
            PgdTarget::Untargeted => LossKind::CrossEntropy { label: j.label as usize },
            PgdTarget::Targeted(t) => LossKind::CrossEntropy { label: t as usize },
        })
        .collect();
    let mut frozen = vec![false; jobs.len()];
    for _ in 0..steps {
        let (logits, _, grads) = model.loss_input_gradients(&adv, &losses)?;
        for (b, job) in jobs.iter().enumerate() {
            if frozen[b] {
                continue;
            }
            if let (Some(level), PgdTarget::Targeted(t)) = (stop_at, job.target) {
                let p = softmax(&logits[b * classes..(b + 1) * classes]);
                if p[t as usize] >= level {
                    frozen[b] = true;
                    continue;
                }
            }
            let dir = match job.target {
                PgdTarget::Untargeted => 1.0,
                PgdTarget::Targeted(_) => -1.0,
            };
            let xa = &mut adv[b * n..(b + 1) * n];
            let g = &grads[b * n..(b + 1) * n];
            for i in 0..n {
                let s = if g[i] > 0.0 {
                    1.0
                } else if g[i] < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                let lo = (job.x[i] - job.epsilon).max(0.0);
                let hi = (job.x[i] + job.epsilon).min(1.0);
                xa[i] = (xa[i] + dir * s * job.step).clamp(lo, hi);
            }
        }
        if frozen.iter().all(|&f| f) {
            break;
        }
    }
    let logits = model.logits_batch(&adv, jobs.len())?;
    Ok(adv
        .chunks(n)
        .zip(logits.chunks(classes))
        .map(|(a, l)| (a.to_vec(), l.to_vec()))
        .collect())
}

/// PGD over a batch of inputs with per-input epsilon.
pub fn pgd_batch(
    model: &Model,
    inputs: &[(usize, &[f32], u8)],
    epsilons: &[f32],
    steps: usize,
    step_fraction: f32,
) -> Result<Vec<AdversarialRecord>, AttackError> {
    let jobs: Vec<PgdJob> = inputs
        .iter()
        .zip(epsilons)
        .map(|(&(_, x, label), &eps)| PgdJob {
            x,
            label,
            target: PgdTarget::Untargeted,
            epsilon: eps,
            step: eps * step_fraction,
        })
        .collect();
    let out = run_pgd(model, &jobs, steps, None)?;
    Ok(out
        .into_iter()
        .zip(inputs.iter().zip(epsilons))
        .map(|((adv, logits), (&(index, x, label), &eps))| {
            AdversarialRecord::build(
                model,
                index,
                AttackKind::Pgd,
                x.to_vec(),
                adv,
                Some(label),
                None,
                Some(eps),
                &logits,
            )
        })
        .collect())
}

/// Single-input PGD with zero-initialised perturbation.
pub fn pgd_attack(
    model: &Model,
    x: &[f32],
    label: u8,
    epsilon: f32,
    steps: usize,
    step_size: f32,
    target: PgdTarget,
) -> Result<AdversarialRecord, AttackError> {
    if !(epsilon >= 0.0) {
        return Err(AttackError::InvalidConfig("epsilon must be >= 0".into()));
    }
    let job = PgdJob {
        x,
        label,
        target,
        epsilon,
        step: step_size,
    };
    let (adv, logits) = run_pgd(model, &[job], steps, None)?.pop().expect("one job");
    let t = match target {
        PgdTarget::Targeted(t) => Some(t),
        PgdTarget::Untargeted => None,
    };
    Ok(AdversarialRecord::build(
        model,
        0,
        AttackKind::Pgd,
        x.to_vec(),
        adv,
        Some(label),
        t,
        Some(epsilon),
        &logits,
    ))
}
