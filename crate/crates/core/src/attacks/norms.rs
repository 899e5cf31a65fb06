use serde::{Deserialize, Serialize};

use super::AttackError;

/// Coordinates with `|delta| <= L0_TOLERANCE` do not count towards L0.
pub const L0_TOLERANCE: f64 = 1e-8;

/// Norms of `delta = adversarial - original`, accumulated in `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Norms {
    pub l0: u32,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

pub fn perturbation_norms(original: &[f32], adversarial: &[f32]) -> Result<Norms, AttackError> {
    if original.len() != adversarial.len() {
        return Err(AttackError::ShapeMismatch {
            left: original.len(),
            right: adversarial.len(),
        });
    }
    let mut n = Norms::default();
    let mut sq = 0.0f64;
    for (&a, &b) in original.iter().zip(adversarial) {
        let d = (b as f64 - a as f64).abs();
        if d > L0_TOLERANCE {
            n.l0 += 1;
        }
        n.l1 += d;
        sq += d * d;
        n.linf = n.linf.max(d);
    }
    n.l2 = sq.sqrt();
    Ok(n)
}
