//! Chance-constraint functions and their coefficient fields.
//!
//! A polynomial constraint is `f(w1, w2, u) = Σ_{i=0..l} h_i(w1, w2) uⁱ` in a
//! scalar decision `u`; an affine constraint is
//! `f(w1, w2, u) = Σ_j h^j(w1, w2) u_j + h(w1, w2)` in a vector decision.
//! Both expose their coefficient fields through [`ChanceConstraint`] so the
//! sample grids `H_i[a][b] = h_i(w1^a, w2^b)` can be built uniformly.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::embedding::WeightedSampleSet;
use crate::error::{Error, Result};

pub type Sample = Vec<f64>;

type FieldsFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;
type ScalarField = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

/// Coefficient fields of a constraint, evaluated at one `(w1, w2)` pair.
pub trait ChanceConstraint: Send + Sync {
    fn field_count(&self) -> usize;
    fn fields(&self, w1: &[f64], w2: &[f64]) -> Vec<f64>;
    /// Constraint value from precomputed fields at decision `u`.
    fn value(&self, fields: &[f64], u: &[f64]) -> f64;
    /// Decision dimension (1 for polynomial constraints).
    fn decision_dim(&self) -> usize;

    fn eval(&self, w1: &[f64], w2: &[f64], u: &[f64]) -> f64 {
        self.value(&self.fields(w1, w2), u)
    }
}

/// `f = Σ h_i uⁱ`. Fields are ordered by power of `u`.
#[derive(Clone)]
pub struct PolynomialChanceConstraint {
    order: usize,
    fields: Arc<FieldsFn>,
}

impl fmt::Debug for PolynomialChanceConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PolynomialChanceConstraint")
            .field("order", &self.order)
            .finish_non_exhaustive()
    }
}

impl PolynomialChanceConstraint {
    /// `fields` must return `order + 1` coefficients `[h_0, …, h_l]`.
    pub fn new<F>(order: usize, fields: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            order,
            fields: Arc::new(fields),
        }
    }

    /// Builds a constraint from one evaluator per coefficient.
    pub fn from_fields(fields: Vec<Box<ScalarField>>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::Empty("coefficient fields"));
        }
        let order = fields.len() - 1;
        Ok(Self::new(order, move |w1, w2| {
            fields.iter().map(|h| h(w1, w2)).collect()
        }))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn evaluate(&self, w1: &[f64], w2: &[f64], u: f64) -> f64 {
        horner(&(self.fields)(w1, w2), u)
    }
}

impl ChanceConstraint for PolynomialChanceConstraint {
    fn field_count(&self) -> usize {
        self.order + 1
    }

    fn fields(&self, w1: &[f64], w2: &[f64]) -> Vec<f64> {
        let h = (self.fields)(w1, w2);
        debug_assert_eq!(h.len(), self.order + 1);
        h
    }

    fn value(&self, fields: &[f64], u: &[f64]) -> f64 {
        horner(fields, u[0])
    }

    fn decision_dim(&self) -> usize {
        1
    }
}

/// `f = Σ_j h^j u_j + h`. Fields are ordered `[h, h^1, …, h^m]`.
#[derive(Clone)]
pub struct AffineChanceConstraint {
    dim: usize,
    fields: Arc<FieldsFn>,
}

impl fmt::Debug for AffineChanceConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AffineChanceConstraint")
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl AffineChanceConstraint {
    /// `fields` returns `[intercept, slope_1, …, slope_m]`.
    pub fn new<F>(dim: usize, fields: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            fields: Arc::new(fields),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn evaluate(&self, w1: &[f64], w2: &[f64], u: &[f64]) -> Result<f64> {
        if u.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: u.len(),
            });
        }
        Ok(affine_value(&(self.fields)(w1, w2), u))
    }
}

impl ChanceConstraint for AffineChanceConstraint {
    fn field_count(&self) -> usize {
        self.dim + 1
    }

    fn fields(&self, w1: &[f64], w2: &[f64]) -> Vec<f64> {
        let h = (self.fields)(w1, w2);
        debug_assert_eq!(h.len(), self.dim + 1);
        h
    }

    fn value(&self, fields: &[f64], u: &[f64]) -> f64 {
        affine_value(fields, u)
    }

    fn decision_dim(&self) -> usize {
        self.dim
    }
}

#[inline]
pub fn horner(coefficients: &[f64], u: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * u + c)
}

#[inline]
pub(crate) fn affine_value(fields: &[f64], u: &[f64]) -> f64 {
    fields[0] + fields[1..].iter().zip(u).map(|(h, x)| h * x).sum::<f64>()
}

/// Coefficient fields on the full `n1 × n2` sample grid, with the product
/// weights `c_αβ = [α_1β_1, α_1β_2, …]` in matching row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrices {
    /// `matrices[i][(a, b)] = h_i(w1^a, w2^b)`.
    pub matrices: Vec<DMatrix<f64>>,
    pub product_weights: Vec<f64>,
}

impl CoefficientMatrices {
    pub fn field_count(&self) -> usize {
        self.matrices.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        let m = &self.matrices[0];
        (m.nrows(), m.ncols())
    }

    /// Number of grid points, `n1 · n2`.
    pub fn len(&self) -> usize {
        self.product_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.product_weights.is_empty()
    }

    /// All fields at the row-major grid index `p`.
    pub fn point(&self, p: usize) -> Vec<f64> {
        let (_, n2) = self.shape();
        let (a, b) = (p / n2, p % n2);
        self.matrices.iter().map(|m| m[(a, b)]).collect()
    }

    /// Fields at every grid point, row-major.
    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|p| self.point(p)).collect()
    }
}

/// `c_αβ`, row-major over `(a, b)`.
pub fn product_weights(alpha: &[f64], beta: &[f64]) -> Vec<f64> {
    alpha.iter().flat_map(|a| beta.iter().map(move |b| a * b)).collect()
}

pub fn evaluate_coefficient_matrices<C: ChanceConstraint + ?Sized>(
    constraint: &C,
    w1: &WeightedSampleSet<Sample>,
    w2: &WeightedSampleSet<Sample>,
) -> CoefficientMatrices {
    let (n1, n2) = (w1.len(), w2.len());
    let fields = constraint.field_count();
    let rows: Vec<Vec<Vec<f64>>> = w1
        .values()
        .par_iter()
        .map(|a| w2.values().iter().map(|b| constraint.fields(a, b)).collect())
        .collect();
    let matrices = (0..fields)
        .map(|i| DMatrix::from_fn(n1, n2, |a, b| rows[a][b][i]))
        .collect();
    CoefficientMatrices {
        matrices,
        product_weights: product_weights(w1.weights(), w2.weights()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic() -> PolynomialChanceConstraint {
        PolynomialChanceConstraint::new(2, |w1, w2| vec![w1[0] - w2[0], w1[0] * w2[0], 0.5])
    }

    #[test]
    fn evaluate_at_zero_returns_h0() {
        let c = quadratic();
        assert_eq!(c.evaluate(&[3.0], &[1.0], 0.0), 2.0);
    }

    #[test]
    fn horner_matches_expansion() {
        let c = quadratic();
        let (w1, w2, u) = ([1.5], [-2.0], 0.7);
        let expected = (1.5 + 2.0) + (1.5 * -2.0) * u + 0.5 * u * u;
        assert!((c.evaluate(&w1, &w2, u) - expected).abs() < 1e-15);
    }

    #[test]
    fn affine_with_zero_slopes_ignores_u() {
        let c = AffineChanceConstraint::new(2, |w1, _| vec![w1[0], 0.0, 0.0]);
        assert_eq!(c.evaluate(&[4.0], &[], &[10.0, -3.0]).unwrap(), 4.0);
        assert!(c.evaluate(&[4.0], &[], &[1.0]).is_err());
    }

    #[test]
    fn from_fields_orders_by_power() {
        let c = PolynomialChanceConstraint::from_fields(vec![Box::new(|_, _| 1.0), Box::new(|w1, _| w1[0])]).unwrap();
        assert_eq!(c.order(), 1);
        assert_eq!(c.evaluate(&[2.0], &[], 3.0), 7.0);
    }

    #[test]
    fn constant_field_grid() {
        let c = PolynomialChanceConstraint::new(0, |_, _| vec![3.0]);
        let w = WeightedSampleSet::uniform(vec![vec![0.0], vec![1.0]]).unwrap();
        let cm = evaluate_coefficient_matrices(&c, &w, &w);
        assert_eq!(cm.matrices[0], DMatrix::from_element(2, 2, 3.0));
        assert_eq!(cm.product_weights, vec![0.25; 4]);
    }

    #[test]
    fn product_weight_layout() {
        assert_eq!(product_weights(&[0.5, 0.5], &[1.0]), vec![0.5, 0.5]);
        let c = product_weights(&[0.2, 0.8], &[0.1, 0.3, 0.6]);
        assert_eq!(c.len(), 6);
        assert!((c[1] - 0.2 * 0.3).abs() < 1e-15);
        assert!((c[3] - 0.8 * 0.1).abs() < 1e-15);
        assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_point_indexing_is_row_major() {
        let c = quadratic();
        let w1 = WeightedSampleSet::uniform(vec![vec![1.0], vec![2.0]]).unwrap();
        let w2 = WeightedSampleSet::uniform(vec![vec![10.0], vec![20.0], vec![30.0]]).unwrap();
        let cm = evaluate_coefficient_matrices(&c, &w1, &w2);
        assert_eq!(cm.shape(), (2, 3));
        assert_eq!(cm.point(4), c.fields(&[2.0], &[20.0]));
    }
}
