//! Norm-constrained attacks and rubbish-class generation.
//!
//! Every attack works on a batch of inputs at once so that one forward/backward
//! pass serves many independent optimisations. Single-input entry points wrap
//! the batched versions.

mod corpus;
mod cw;
mod l0;
mod norms;
mod pgd;
mod rubbish;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{argmax, softmax, Model, NnError};

pub use corpus::{
    confusion_counts, decode_corpus, encode_corpus, generate_corpus, read_corpus, write_corpus, Corpus,
    CorpusError, CorpusManifest, CorpusRequest, RecordMeta,
};
pub use cw::{cw_l2_attack, cw_l2_batch, ead_l1_attack, ead_l1_batch, soft_threshold};
pub use l0::{l0_greedy_attack, l0_greedy_batch};
pub use norms::{perturbation_norms, Norms, L0_TOLERANCE};
pub use pgd::{pgd_attack, pgd_batch, PgdTarget};
pub use rubbish::{generate_rubbish, rubbish_batch, RubbishInit};

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("shape mismatch: {left} vs {right} values")]
    ShapeMismatch { left: usize, right: usize },
    #[error("invalid attack config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Pgd,
    CwL2,
    EadL1,
    GreedyL0,
    RcRnd,
    RcDistrib,
}

impl AttackKind {
    pub const ALL: [AttackKind; 6] = [
        AttackKind::GreedyL0,
        AttackKind::EadL1,
        AttackKind::CwL2,
        AttackKind::Pgd,
        AttackKind::RcRnd,
        AttackKind::RcDistrib,
    ];

    /// The four norm-constrained attacks, in L0, L1, L2, L-inf order.
    pub const NORM_ATTACKS: [AttackKind; 4] = [
        AttackKind::GreedyL0,
        AttackKind::EadL1,
        AttackKind::CwL2,
        AttackKind::Pgd,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AttackKind::Pgd => "pgd",
            AttackKind::CwL2 => "cw-l2",
            AttackKind::EadL1 => "ead-l1",
            AttackKind::GreedyL0 => "greedy-l0",
            AttackKind::RcRnd => "rc-rnd",
            AttackKind::RcDistrib => "rc-distrib",
        }
    }

    pub fn is_rubbish(&self) -> bool {
        matches!(self, AttackKind::RcRnd | AttackKind::RcDistrib)
    }

    /// The norm an attack is constrained on; `None` for rubbish generators.
    pub fn norm(&self) -> Option<NormKind> {
        match self {
            AttackKind::GreedyL0 => Some(NormKind::L0),
            AttackKind::EadL1 => Some(NormKind::L1),
            AttackKind::CwL2 => Some(NormKind::L2),
            AttackKind::Pgd => Some(NormKind::LInf),
            AttackKind::RcRnd | AttackKind::RcDistrib => None,
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown attack kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    L0,
    L1,
    L2,
    LInf,
}

impl NormKind {
    pub fn of(&self, n: &Norms) -> f64 {
        match self {
            NormKind::L0 => n.l0 as f64,
            NormKind::L1 => n.l1,
            NormKind::L2 => n.l2,
            NormKind::LInf => n.linf,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            NormKind::L0 => "l0",
            NormKind::L1 => "l1",
            NormKind::L2 => "l2",
            NormKind::LInf => "linf",
        }
    }
}

/// One crafted input with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialRecord {
    /// Index of the source input (test-set index, or ordinal for rubbish examples).
    pub index: usize,
    pub kind: AttackKind,
    pub original: Vec<f32>,
    pub adversarial: Vec<f32>,
    /// True class `C_o`; `None` for rubbish examples.
    pub original_class: Option<u8>,
    pub target: Option<u8>,
    /// Predicted class `C_p` of the adversarial image.
    pub predicted_class: u8,
    /// Softmax probability of `predicted_class`.
    pub confidence: f32,
    pub success: bool,
    /// L-inf budget for PGD-based records.
    pub epsilon: Option<f32>,
    pub norms: Norms,
}

impl AdversarialRecord {
    pub(crate) fn build(
        model: &Model,
        index: usize,
        kind: AttackKind,
        original: Vec<f32>,
        adversarial: Vec<f32>,
        original_class: Option<u8>,
        target: Option<u8>,
        epsilon: Option<f32>,
        logits: &[f32],
    ) -> Self {
        debug_assert_eq!(logits.len(), model.classes());
        let probs = softmax(logits);
        let predicted = argmax(logits);
        let success = match (target, original_class) {
            (Some(t), _) => predicted == t as usize,
            (None, Some(c)) => predicted != c as usize,
            (None, None) => false,
        };
        let norms = perturbation_norms(&original, &adversarial).expect("same length");
        Self {
            index,
            kind,
            original,
            adversarial,
            original_class,
            target,
            predicted_class: predicted as u8,
            confidence: probs[predicted],
            success,
            epsilon,
            norms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PgdConfig {
    pub epsilons: Vec<f32>,
    pub steps: usize,
    /// Step size as a fraction of epsilon.
    pub step_fraction: f32,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            epsilons: (1..=15).map(|i| i as f32 / 100.0).collect(),
            steps: 40,
            step_fraction: 0.25,
        }
    }
}

impl PgdConfig {
    /// The CIFAR-10 epsilon grid {0.01, ..., 0.05}.
    pub fn cifar() -> Self {
        Self {
            epsilons: (1..=5).map(|i| i as f32 / 100.0).collect(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CwConfig {
    pub c_min: f32,
    pub c_max: f32,
    pub search_rounds: usize,
    pub steps: usize,
    pub learning_rate: f32,
    pub kappa: f32,
}

impl Default for CwConfig {
    fn default() -> Self {
        Self {
            c_min: 1e-3,
            c_max: 1e2,
            search_rounds: 9,
            steps: 200,
            learning_rate: 0.01,
            kappa: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EadConfig {
    pub beta: f32,
    pub c_min: f32,
    pub c_max: f32,
    pub search_rounds: usize,
    pub steps: usize,
    pub learning_rate: f32,
    pub kappa: f32,
}

impl Default for EadConfig {
    fn default() -> Self {
        Self {
            beta: 5e-2,
            c_min: 1e-3,
            c_max: 1e2,
            search_rounds: 9,
            steps: 200,
            learning_rate: 0.005,
            kappa: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct L0Config {
    pub max_pixels: usize,
    /// Grid values per pixel for single-channel images.
    pub grid: usize,
    /// Grid values per channel for multi-channel images (searched jointly).
    pub grid_rgb: usize,
}

impl Default for L0Config {
    fn default() -> Self {
        Self {
            max_pixels: 50,
            grid: 17,
            grid_rgb: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RubbishConfig {
    pub threshold: f32,
    pub epsilon: f32,
    pub steps: usize,
    pub step_size: f32,
}

impl Default for RubbishConfig {
    fn default() -> Self {
        Self {
            threshold: 0.95,
            epsilon: 0.1,
            steps: 100,
            step_size: 0.005,
        }
    }
}

/// Parameters for every attack family.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub pgd: PgdConfig,
    pub cw: CwConfig,
    pub ead: EadConfig,
    pub l0: L0Config,
    pub rubbish: RubbishConfig,
    /// Inputs per optimisation batch.
    pub batch_size: usize,
    pub seed: u64,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        let bad = |m: &str| Err(AttackError::InvalidConfig(m.into()));
        if self.pgd.epsilons.is_empty() || self.pgd.epsilons.iter().any(|&e| !(e > 0.0)) {
            return bad("every epsilon must be > 0");
        }
        if self.l0.max_pixels == 0 {
            return bad("l0 max_pixels must be >= 1");
        }
        if self.l0.grid < 2 || self.l0.grid_rgb < 2 {
            return bad("l0 grid needs at least two values");
        }
        if !(self.rubbish.threshold > 0.0 && self.rubbish.threshold < 1.0) {
            return bad("rubbish threshold must lie in (0, 1)");
        }
        if !(self.rubbish.epsilon > 0.0) {
            return bad("rubbish epsilon must be > 0");
        }
        for (name, lo, hi) in [("cw", self.cw.c_min, self.cw.c_max), ("ead", self.ead.c_min, self.ead.c_max)] {
            if !(lo > 0.0 && hi >= lo) {
                return Err(AttackError::InvalidConfig(format!("{name} needs 0 < c_min <= c_max")));
            }
        }
        if self.ead.beta < 0.0 {
            return bad("ead beta must be >= 0");
        }
        Ok(())
    }

    pub fn effective_batch(&self) -> usize {
        if self.batch_size == 0 {
            64
        } else {
            self.batch_size
        }
    }
}

pub(crate) fn check_len(model: &Model, x: &[f32]) -> Result<(), AttackError> {
    if x.len() != model.input_len() {
        return Err(AttackError::ShapeMismatch {
            left: x.len(),
            right: model.input_len(),
        });
    }
    Ok(())
}
