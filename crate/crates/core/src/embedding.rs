//! Weighted empirical distributions, their kernel mean embeddings and the
//! squared MMD between two embeddings.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{KernelArg, KernelSpec};

/// Tolerance on `Σ w = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Weights below this are far outside the regime where the embedding
/// estimator is consistent; we still accept them but flag the set.
pub const NEGATIVE_WEIGHT_WARN: f64 = -0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSampleSet<T> {
    values: Vec<T>,
    weights: Vec<f64>,
}

impl<T> WeightedSampleSet<T> {
    /// Weights must already sum to one. Negative weights are legal.
    pub fn new(values: Vec<T>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("sample set"));
        }
        if values.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: values.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidInput("non-finite weight".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidInput(format!("weights sum to {sum}, expected 1")));
        }
        let set = Self { values, weights };
        if set.has_large_negative_weight() {
            log::warn!(
                "sample set has weight {:.3} below {NEGATIVE_WEIGHT_WARN}",
                set.min_weight()
            );
        }
        Ok(set)
    }

    /// Rescales arbitrary raw weights to sum to one.
    pub fn normalized(values: Vec<T>, raw: Vec<f64>) -> Result<Self> {
        let sum: f64 = raw.iter().sum();
        if sum == 0.0 || !sum.is_finite() {
            return Err(Error::InvalidInput(format!("weights sum to {sum}, cannot normalize")));
        }
        Self::new(values, raw.into_iter().map(|w| w / sum).collect())
    }

    /// i.i.d. weights `1/n`.
    pub fn uniform(values: Vec<T>) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::Empty("sample set"));
        }
        Ok(Self {
            values,
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_parts(self) -> (Vec<T>, Vec<f64>) {
        (self.values, self.weights)
    }

    /// `Σ wᵢ²`; the quantity governing the embedding's convergence rate.
    pub fn sum_sq_weights(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn has_large_negative_weight(&self) -> bool {
        self.min_weight() < NEGATIVE_WEIGHT_WARN
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, f64)> {
        self.values.iter().zip(self.weights.iter().copied())
    }
}

impl WeightedSampleSet<f64> {
    /// Multiplies every value by `factor`, keeping weights.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// The three inner products making up the squared MMD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmdTerms {
    pub pp: f64,
    pub pq: f64,
    pub qq: f64,
}

impl MmdTerms {
    /// Unclamped `⟨μP,μP⟩ − 2⟨μP,μQ⟩ + ⟨μQ,μQ⟩`.
    pub fn raw(&self) -> f64 {
        self.pp - 2.0 * self.pq + self.qq
    }

    pub fn magnitude(&self) -> f64 {
        self.pp.abs() + 2.0 * self.pq.abs() + self.qq.abs()
    }
}

/// `⟨μP, μQ⟩ = Σᵢ Σⱼ pᵢ qⱼ k(xᵢ, yⱼ)` without materializing the Gram matrix.
pub fn embedding_inner<T: KernelArg>(
    p: &WeightedSampleSet<T>,
    q: &WeightedSampleSet<T>,
    spec: &KernelSpec,
) -> Result<f64> {
    let rows: Vec<f64> = p
        .values
        .par_iter()
        .zip(p.weights.par_iter())
        .map(|(x, wp)| {
            let mut acc = 0.0;
            for (y, wq) in q.values.iter().zip(&q.weights) {
                acc += wq * x.kernel(y, spec)?;
            }
            Ok(wp * acc)
        })
        .collect::<Result<_>>()?;
    Ok(rows.iter().sum())
}

pub fn mmd_terms<T: KernelArg>(
    p: &WeightedSampleSet<T>,
    q: &WeightedSampleSet<T>,
    spec: &KernelSpec,
) -> Result<MmdTerms> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::Empty("mmd input"));
    }
    spec.validate()?;
    Ok(MmdTerms {
        pp: embedding_inner(p, p, spec)?,
        pq: embedding_inner(p, q, spec)?,
        qq: embedding_inner(q, q, spec)?,
    })
}

/// Squared MMD, clamped at zero.
pub fn mmd_squared<T: KernelArg>(p: &WeightedSampleSet<T>, q: &WeightedSampleSet<T>, spec: &KernelSpec) -> Result<f64> {
    let terms = mmd_terms(p, q, spec)?;
    let raw = terms.raw();
    debug_assert!(
        raw >= -1e-10 * (1.0 + terms.magnitude()),
        "negative squared MMD {raw} beyond rounding"
    );
    Ok(raw.max(0.0))
}

/// Raw moments `m_k = Σ wᵢ xᵢ^k`, k = 1..=order.
pub fn empirical_moments(p: &WeightedSampleSet<f64>, order: u32) -> Result<Vec<f64>> {
    if order < 1 {
        return Err(Error::InvalidInput("moment order must be >= 1".into()));
    }
    let mut moments = vec![0.0; order as usize];
    for (x, w) in p.iter() {
        let mut pow = 1.0;
        for m in moments.iter_mut() {
            pow *= x;
            *m += w * pow;
        }
    }
    Ok(moments)
}
