//! Reduced-set re-weighting: given a large i.i.d. sample and a small subset
//! of it, find weights on the subset whose kernel mean is closest to the
//! full sample's kernel mean, subject to the weights summing to one.
//!
//! The problem
//!
//! ```text
//! min_α  αᵀ K_rr α − 2 qᵀ α + (1/N²) 1ᵀ K_ff 1     s.t. 1ᵀ α = 1,
//! q_i = (1/N) Σ_j k(r_i, f_j)
//! ```
//!
//! is an equality-constrained least squares and is solved directly through
//! its KKT system. Weights are not constrained to be nonnegative.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::{gram, KernelSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSetFit {
    pub weights: Vec<f64>,
    /// Squared embedding distance at `weights` (unregularized).
    pub residual: f64,
    pub source_size: usize,
    pub reduced_size: usize,
    /// Ridge actually used in the KKT solve.
    pub ridge: f64,
}

/// Problem data shared by the solve and the residual evaluation.
struct Problem {
    k_rr: DMatrix<f64>,
    q: DVector<f64>,
    full_self: f64,
}

impl Problem {
    fn new(full: &[Vec<f64>], reduced: &[Vec<f64>], spec: &KernelSpec) -> Result<Self> {
        let k_rr = gram(reduced, reduced, spec)?.entries;
        let k_rf = gram(reduced, full, spec)?.entries;
        let inv_n = 1.0 / full.len() as f64;
        let q = DVector::from_iterator(reduced.len(), k_rf.row_iter().map(|r| r.sum() * inv_n));
        let k_ff = gram(full, full, spec)?.entries;
        let full_self = k_ff.sum() * inv_n * inv_n;
        Ok(Self { k_rr, q, full_self })
    }

    fn residual(&self, alpha: &DVector<f64>) -> f64 {
        let quad = alpha.dot(&(&self.k_rr * alpha));
        (quad - 2.0 * self.q.dot(alpha) + self.full_self).max(0.0)
    }

    fn solve(&self, ridge: f64) -> Option<DVector<f64>> {
        let n = self.q.len();
        let mut kkt = DMatrix::zeros(n + 1, n + 1);
        kkt.view_mut((0, 0), (n, n)).copy_from(&self.k_rr);
        for i in 0..n {
            kkt[(i, i)] += ridge;
            kkt[(i, n)] = 1.0;
            kkt[(n, i)] = 1.0;
        }
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&self.q);
        rhs[n] = 1.0;
        let lu = kkt.full_piv_lu();
        if !lu.is_invertible() {
            return None;
        }
        let sol = lu.solve(&rhs)?;
        let mut alpha = sol.rows(0, n).into_owned();
        if alpha.iter().any(|a| !a.is_finite()) {
            return None;
        }
        // Absorb rounding drift in the sum constraint.
        let drift = (1.0 - alpha.sum()) / n as f64;
        alpha.add_scalar_mut(drift);
        Some(alpha)
    }
}

/// Default Tikhonov term: `1e-8 · trace(K_rr) / n`.
pub fn default_ridge(reduced: &[Vec<f64>], spec: &KernelSpec) -> Result<f64> {
    let k = gram(reduced, reduced, spec)?.entries;
    Ok(1e-8 * k.trace() / reduced.len() as f64)
}

/// Fits reduced-set weights. A `ridge` of exactly zero is tried first and,
/// if the KKT system is singular, retried with `1e-10 · trace(K_rr)/n`.
pub fn solve_weights(full: &[Vec<f64>], reduced: &[Vec<f64>], spec: &KernelSpec, ridge: f64) -> Result<ReducedSetFit> {
    if full.is_empty() || reduced.is_empty() {
        return Err(Error::Empty("reduced-set input"));
    }
    if reduced.len() > full.len() {
        return Err(Error::InvalidInput(format!(
            "reduced size {} exceeds source size {}",
            reduced.len(),
            full.len()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidInput(format!("ridge must be >= 0, got {ridge}")));
    }
    let problem = Problem::new(full, reduced, spec)?;
    let n = reduced.len();
    if n == 1 {
        let alpha = DVector::from_element(1, 1.0);
        return Ok(ReducedSetFit {
            residual: problem.residual(&alpha),
            weights: vec![1.0],
            source_size: full.len(),
            reduced_size: 1,
            ridge,
        });
    }

    let (alpha, used) = match problem.solve(ridge) {
        Some(a) => (a, ridge),
        None if ridge == 0.0 => {
            let fallback = 1e-10 * problem.k_rr.trace() / n as f64;
            let a = problem.solve(fallback).ok_or(Error::SingularKkt { ridge: fallback })?;
            (a, fallback)
        }
        None => return Err(Error::SingularKkt { ridge }),
    };
    Ok(ReducedSetFit {
        residual: problem.residual(&alpha),
        weights: alpha.iter().copied().collect(),
        source_size: full.len(),
        reduced_size: n,
        ridge: used,
    })
}

/// Squared embedding distance between the uniform full-sample embedding and
/// the given weights on `reduced`.
pub fn embedding_residual(full: &[Vec<f64>], reduced: &[Vec<f64>], weights: &[f64], spec: &KernelSpec) -> Result<f64> {
    if weights.len() != reduced.len() {
        return Err(Error::DimensionMismatch {
            expected: reduced.len(),
            got: weights.len(),
        });
    }
    let problem = Problem::new(full, reduced, spec)?;
    Ok(problem.residual(&DVector::from_column_slice(weights)))
}

/// `n` distinct indices out of `0..total`, uniformly at random, sorted.
pub fn random_subset<R: Rng + ?Sized>(rng: &mut R, total: usize, n: usize) -> Vec<usize> {
    let mut idx = sample(rng, total, n.min(total)).into_vec();
    idx.sort_unstable();
    idx
}

/// Fits weights for a random `n`-subset of `full` with the default ridge.
pub fn reduce_random<R: Rng + ?Sized>(
    rng: &mut R,
    full: &[Vec<f64>],
    n: usize,
    spec: &KernelSpec,
) -> Result<(Vec<usize>, ReducedSetFit)> {
    let idx = random_subset(rng, full.len(), n);
    let reduced: Vec<Vec<f64>> = idx.iter().map(|&i| full[i].clone()).collect();
    let ridge = default_ridge(&reduced, spec)?;
    let fit = solve_weights(full, &reduced, spec, ridge)?;
    Ok((idx, fit))
}
