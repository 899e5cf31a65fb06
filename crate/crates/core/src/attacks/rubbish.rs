//! Rubbish-class examples: noise images pushed into a target class.

use super::pgd::{run_pgd, PgdJob, PgdTarget};
use super::{AdversarialRecord, AttackError, AttackKind, RubbishConfig};
use crate::data::{sample_rc_init, sample_uniform_init, PixelDistribution};
use crate::nn::Model;
use crate::seed::item_seed;

#[derive(Debug, Clone, Copy)]
pub enum RubbishInit<'a> {
    /// Uniform noise on `[0, 1]`.
    Uniform,
    /// Per-position draws from the training pixel values.
    PixelDistribution(&'a PixelDistribution),
}

impl RubbishInit<'_> {
    pub fn kind(&self) -> AttackKind {
        match self {
            RubbishInit::Uniform => AttackKind::RcRnd,
            RubbishInit::PixelDistribution(_) => AttackKind::RcDistrib,
        }
    }

    pub fn sample(&self, shape: &[usize], seed: u64) -> Vec<f32> {
        match self {
            RubbishInit::Uniform => sample_uniform_init(shape, seed).into_data(),
            RubbishInit::PixelDistribution(d) => sample_rc_init(d, seed).into_data(),
        }
    }
}

/// Targeted PGD from each `(ordinal, initial image, target)`. A sample stops
/// moving once its target probability reaches the threshold; success requires
/// the final confidence to be at least the threshold.
pub fn rubbish_batch(
    model: &Model,
    kind: AttackKind,
    jobs: &[(usize, &[f32], u8)],
    cfg: &RubbishConfig,
) -> Result<Vec<AdversarialRecord>, AttackError> {
    if !kind.is_rubbish() {
        return Err(AttackError::InvalidConfig(format!("{kind} is not a rubbish generator")));
    }
    let classes = model.classes();
    if let Some(&(_, _, t)) = jobs.iter().find(|j| j.2 as usize >= classes) {
        return Err(AttackError::InvalidConfig(format!("target {t} out of range")));
    }
    let pgd: Vec<PgdJob> = jobs
        .iter()
        .map(|&(_, x, t)| PgdJob {
            x,
            label: t,
            target: PgdTarget::Targeted(t),
            epsilon: cfg.epsilon,
            step: cfg.step_size,
        })
        .collect();
    let out = run_pgd(model, &pgd, cfg.steps, Some(cfg.threshold))?;
    Ok(out
        .into_iter()
        .zip(jobs)
        .map(|((adv, logits), &(ordinal, x, t))| {
            let mut rec =
                AdversarialRecord::build(model, ordinal, kind, x.to_vec(), adv, None, Some(t), Some(cfg.epsilon), &logits);
            rec.success &= rec.confidence >= cfg.threshold;
            rec
        })
        .collect())
}

/// One rubbish example; the initial image is drawn with `item_seed(seed, ordinal)`.
pub fn generate_rubbish(
    model: &Model,
    init: RubbishInit,
    ordinal: usize,
    target: u8,
    cfg: &RubbishConfig,
    seed: u64,
) -> Result<AdversarialRecord, AttackError> {
    let x = init.sample(model.input_shape(), item_seed(seed, ordinal as u64));
    Ok(rubbish_batch(model, init.kind(), &[(ordinal, &x, target)], cfg)?
        .pop()
        .expect("one record"))
}
