//! Kernels and Gram matrices.
//!
//! Two families are supported: the inhomogeneous polynomial kernel
//! `k(a, b) = (γ·a·b + c)^d` on scalar constraint values, and the Gaussian
//! RBF kernel on vector-valued uncertainty samples (used for reduced-set
//! weight fitting).

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    PolynomialScalar,
    RbfVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    /// Polynomial degree; the moment order matched by the MMD.
    pub degree: u32,
    pub offset: f64,
    pub scale: f64,
    pub family: KernelFamily,
    pub rbf_bandwidth: f64,
}

impl KernelSpec {
    pub fn polynomial(degree: u32) -> Self {
        Self {
            degree,
            offset: 1.0,
            scale: 1.0,
            family: KernelFamily::PolynomialScalar,
            rbf_bandwidth: 1.0,
        }
    }

    pub fn rbf(bandwidth: f64) -> Self {
        Self {
            degree: 1,
            offset: 0.0,
            scale: 1.0,
            family: KernelFamily::RbfVector,
            rbf_bandwidth: bandwidth,
        }
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(Error::InvalidInput("kernel degree must be >= 1".into()));
        }
        if !(self.offset >= 0.0) || !self.offset.is_finite() {
            return Err(Error::InvalidInput(format!(
                "kernel offset must be >= 0, got {}",
                self.offset
            )));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::InvalidInput(format!(
                "kernel scale must be > 0, got {}",
                self.scale
            )));
        }
        if self.family == KernelFamily::RbfVector && (!(self.rbf_bandwidth > 0.0) || !self.rbf_bandwidth.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "rbf bandwidth must be > 0, got {}",
                self.rbf_bandwidth
            )));
        }
        Ok(())
    }

    /// Weight of the k-th raw-moment term in the binomial expansion of the
    /// polynomial kernel: `C(d, k) γ^k c^(d-k)`.
    pub fn moment_weight(&self, k: u32) -> f64 {
        binomial(self.degree, k) * self.scale.powi(k as i32) * self.offset.powi((self.degree - k) as i32)
    }
}

pub(crate) fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `(γ a b + c)^d`.
pub fn poly_kernel(a: f64, b: f64, spec: &KernelSpec) -> Result<f64> {
    if spec.family != KernelFamily::PolynomialScalar {
        return Err(Error::InvalidInput("poly_kernel needs a polynomial-scalar spec".into()));
    }
    spec.validate()?;
    ensure_finite(a, "kernel argument")?;
    ensure_finite(b, "kernel argument")?;
    Ok(poly_kernel_unchecked(a, b, spec))
}

#[inline]
pub(crate) fn poly_kernel_unchecked(a: f64, b: f64, spec: &KernelSpec) -> f64 {
    (spec.scale * a * b + spec.offset).powi(spec.degree as i32)
}

/// `exp(-‖x - y‖² / (2 h²))`.
pub fn rbf_kernel(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<f64> {
    if spec.family != KernelFamily::RbfVector {
        return Err(Error::InvalidInput("rbf_kernel needs an rbf-vector spec".into()));
    }
    spec.validate()?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(rbf_unchecked(x, y, spec.rbf_bandwidth))
}

#[inline]
pub(crate) fn rbf_unchecked(x: &[f64], y: &[f64], bandwidth: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * bandwidth * bandwidth)).exp()
}

/// Anything a kernel can be evaluated on.
pub trait KernelArg: Sync {
    fn kernel(&self, other: &Self, spec: &KernelSpec) -> Result<f64>;
}

impl KernelArg for f64 {
    fn kernel(&self, other: &Self, spec: &KernelSpec) -> Result<f64> {
        poly_kernel(*self, *other, spec)
    }
}

impl KernelArg for Vec<f64> {
    fn kernel(&self, other: &Self, spec: &KernelSpec) -> Result<f64> {
        rbf_kernel(self, other, spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
}

impl GramMatrix {
    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    /// `lᵀ K r`.
    pub fn contract(&self, left: &[f64], right: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, li) in left.iter().enumerate() {
            let row: f64 = right.iter().enumerate().map(|(j, rj)| self.entries[(i, j)] * rj).sum();
            acc += li * row;
        }
        acc
    }

    /// Smallest and largest eigenvalue of a square Gram matrix.
    pub fn eigen_range(&self) -> Option<(f64, f64)> {
        if self.rows() != self.cols() || self.rows() == 0 {
            return None;
        }
        let sym = (&self.entries + self.entries.transpose()) * 0.5;
        let eig = sym.symmetric_eigenvalues();
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some((min, max))
    }
}

pub fn gram<T: KernelArg>(xs: &[T], ys: &[T], spec: &KernelSpec) -> Result<GramMatrix> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Empty("gram inputs"));
    }
    spec.validate()?;
    let rows: Vec<Vec<f64>> = xs
        .par_iter()
        .map(|x| ys.iter().map(|y| x.kernel(y, spec)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let entries = DMatrix::from_fn(xs.len(), ys.len(), |i, j| rows[i][j]);
    Ok(GramMatrix { entries })
}

/// Median pairwise Euclidean distance; the default RBF bandwidth heuristic.
/// Falls back to 1.0 for degenerate sets (fewer than two distinct points).
pub fn median_pairwise_distance(samples: &[Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(samples.len() * samples.len().saturating_sub(1) / 2);
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let s: f64 = samples[i].iter().zip(&samples[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d.push(s.sqrt());
        }
    }
    match crate::median(&mut d) {
        Some(m) if m > 0.0 => m,
        _ => 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn poly_kernel_closed_forms() {
        let k = KernelSpec::polynomial(3);
        assert_eq!(poly_kernel(0.0, 7.3, &k).unwrap(), 1.0);
        let k = KernelSpec::polynomial(2);
        assert_eq!(poly_kernel(1.0, 1.0, &k).unwrap(), 4.0);
        assert_eq!(poly_kernel(2.0, 3.0, &k).unwrap(), 49.0);
    }

    #[test]
    fn poly_kernel_rejects_non_finite() {
        let k = KernelSpec::polynomial(2);
        assert!(poly_kernel(f64::NAN, 1.0, &k).is_err());
        assert!(poly_kernel(1.0, f64::INFINITY, &k).is_err());
    }

    #[test]
    fn rbf_kernel_closed_forms() {
        let k = KernelSpec::rbf(1.0);
        assert_eq!(rbf_kernel(&[0.3, -2.0], &[0.3, -2.0], &k).unwrap(), 1.0);
        assert_eq!(
            rbf_kernel(&[0.0, 0.0], &[0.0, 0.0], &KernelSpec::rbf(0.01)).unwrap(),
            1.0
        );
        let v = rbf_kernel(&[1.0, 0.0], &[0.0, 0.0], &k).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.60653).abs() < 1e-5);
        assert!(matches!(
            rbf_kernel(&[1.0], &[0.0, 0.0], &k),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(KernelSpec::polynomial(0).validate().is_err());
        assert!(KernelSpec::polynomial(2).with_offset(-1.0).validate().is_err());
        assert!(KernelSpec::polynomial(2).with_scale(0.0).validate().is_err());
        assert!(KernelSpec::rbf(0.0).validate().is_err());
        assert!(KernelSpec::rbf(0.5).validate().is_ok());
    }

    #[test]
    fn gram_shapes() {
        let k = KernelSpec::polynomial(1).with_offset(0.0);
        let g = gram(&[1.0], &[1.0], &k).unwrap();
        assert_eq!(g.entries[(0, 0)], 1.0);
        let g = gram(&[1.0, 2.0, 3.0], &[0.5, 0.1], &KernelSpec::polynomial(2)).unwrap();
        assert_eq!((g.rows(), g.cols()), (3, 2));
        assert!(gram::<f64>(&[], &[1.0], &k).is_err());
    }

    #[test]
    fn gram_of_normal_scalars_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..50).map(|_| rng.sample(StandardNormal)).collect();
        let g = gram(&xs, &xs, &KernelSpec::polynomial(3)).unwrap();
        let (min, max) = g.eigen_range().unwrap();
        assert!(min >= -1e-9 * max, "min {min} max {max}");
        for i in 0..50 {
            for j in 0..50 {
                let (a, b) = (g.entries[(i, j)], g.entries[(j, i)]);
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(5, 0), 1.0);
        assert_eq!(binomial(5, 5), 1.0);
        assert_eq!(binomial(3, 4), 0.0);
    }
}
