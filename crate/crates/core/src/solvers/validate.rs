use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraint::{ChanceConstraint, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Every `(w1^a, w2^b)` cross pair.
    Grid,
    /// Index-matched pairs `(w1^k, w2^k)`.
    #[default]
    Paired,
}

/// Fraction of held-out evaluations with `f ≤ 0`.
pub fn validate_eta(
    constraint: &dyn ChanceConstraint,
    u: &[f64],
    holdout_w1: &[Sample],
    holdout_w2: &[Sample],
    pairing: Pairing,
) -> Result<f64> {
    validate_joint(&[constraint], u, holdout_w1, &[holdout_w2], pairing)
}

/// Joint satisfaction of several constraints sharing `w1`; `w2_per` holds
/// one `w2` pool per constraint.
pub fn validate_joint(
    constraints: &[&dyn ChanceConstraint],
    u: &[f64],
    w1: &[Sample],
    w2_per: &[&[Sample]],
    pairing: Pairing,
) -> Result<f64> {
    if constraints.is_empty() || constraints.len() != w2_per.len() {
        return Err(Error::DimensionMismatch {
            expected: constraints.len(),
            got: w2_per.len(),
        });
    }
    if w1.is_empty() || w2_per.iter().any(|w| w.is_empty()) {
        return Err(Error::Empty("holdout samples"));
    }
    let ok_at = |a: usize, b: usize| {
        constraints
            .iter()
            .zip(w2_per)
            .all(|(c, w2)| c.eval(&w1[a], &w2[b], u) <= 0.0)
    };
    let (hits, total) = match pairing {
        Pairing::Paired => {
            let n = w2_per.iter().map(|w| w.len()).fold(w1.len(), usize::min);
            ((0..n).into_par_iter().filter(|&k| ok_at(k, k)).count(), n)
        }
        Pairing::Grid => {
            let n2 = w2_per[0].len();
            if w2_per.iter().any(|w| w.len() != n2) {
                return Err(Error::DimensionMismatch {
                    expected: n2,
                    got: w2_per.iter().map(|w| w.len()).min().unwrap_or(0),
                });
            }
            let hits = (0..w1.len())
                .into_par_iter()
                .map(|a| (0..n2).filter(|&b| ok_at(a, b)).count())
                .sum();
            (hits, w1.len() * n2)
        }
    };
    Ok(hits as f64 / total as f64)
}
