use serde::{Deserialize, Serialize};

use super::NnError;

/// Scalar objectives whose input gradients drive the attacks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossKind {
    CrossEntropy { label: usize },
    /// `max(Z_class - max_{j != class} Z_j, -kappa)`.
    CwMargin { class: usize, kappa: f32 },
    ClassLogit { class: usize },
}

impl LossKind {
    fn class(&self) -> usize {
        match *self {
            LossKind::CrossEntropy { label } => label,
            LossKind::CwMargin { class, .. } | LossKind::ClassLogit { class } => class,
        }
    }

    /// Evaluates the loss on one logit row and writes d loss / d logits into `grad`.
    pub fn value_and_grad(&self, logits: &[f32], grad: &mut [f32]) -> Result<f32, NnError> {
        let n = logits.len();
        let class = self.class();
        if class >= n {
            return Err(NnError::ClassOutOfRange { class, classes: n });
        }
        grad.fill(0.0);
        let value = match *self {
            LossKind::CrossEntropy { label } => {
                let p = softmax(logits);
                for (g, &pi) in grad.iter_mut().zip(&p) {
                    *g = pi;
                }
                grad[label] -= 1.0;
                -log_softmax_at(logits, label)
            }
            LossKind::CwMargin { class, kappa } => {
                let (other, other_z) = max_other(logits, class);
                let margin = logits[class] - other_z;
                if margin > -kappa {
                    grad[class] = 1.0;
                    grad[other] = -1.0;
                    margin
                } else {
                    -kappa
                }
            }
            LossKind::ClassLogit { class } => {
                grad[class] = 1.0;
                logits[class]
            }
        };
        Ok(value)
    }
}

/// Index and value of the largest logit other than `class`. Ties go to the lower index.
pub fn max_other(logits: &[f32], class: usize) -> (usize, f32) {
    let mut best = (usize::MAX, f32::NEG_INFINITY);
    for (j, &z) in logits.iter().enumerate() {
        if j != class && (best.0 == usize::MAX || z > best.1) {
            best = (j, z);
        }
    }
    best
}

pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = logits.iter().map(|&z| ((z - max) as f64).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| (e / sum) as f32).collect()
}

pub fn log_softmax_at(logits: &[f32], index: usize) -> f32 {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let lse: f64 = logits.iter().map(|&z| ((z - max) as f64).exp()).sum::<f64>().ln();
    ((logits[index] - max) as f64 - lse) as f32
}

/// Index of the largest logit; ties go to the lower index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
