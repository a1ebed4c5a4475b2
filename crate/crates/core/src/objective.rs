//! Closed-form MMD objectives in the decision variable.
//!
//! Two ways of embedding the constraint distribution at a decision `u` are
//! supported:
//!
//! * [`EmbeddingPath::Pushforward`] (default) embeds the values
//!   `f_p(u) = Σ_i H_i[p] uⁱ` themselves. With the polynomial kernel the
//!   squared MMD collapses to a weighted sum of squared raw-moment gaps,
//!   `Σ_k C(d,k) γ^k c^(d−k) (M_k(u) − D_k)²`, where `M_k(u)` is a polynomial
//!   in `u` of degree `k·l`. The objective is therefore a polynomial of
//!   degree `2·l·d`, assembled once.
//! * [`EmbeddingPath::CoefficientLinear`] uses `μ_f(u) = Σ_i μ_{h_i} uⁱ`, a
//!   linear combination of per-coefficient embeddings. Its squared distance
//!   to the desired embedding is a degree-`2l` polynomial whose coefficients
//!   are Gram contractions `c_αβ K_{h_i h_j} c_αβᵀ`, `c_αβ K_{h_i f} c_λξᵀ`
//!   and `c_λξ K_ff c_λξᵀ`.
//!
//! The two coincide for the linear kernel (`d = 1`, `c = 0`).
//!
//! All constraint values are divided by a shared robust scale (median
//! absolute value of the pooled embedded and desired values) before any
//! kernel evaluation.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraint::{affine_value, horner, CoefficientMatrices};
use crate::desired::DesiredDistribution;
use crate::embedding::WeightedSampleSet;
use crate::error::{Error, Result};
use crate::kernel::{poly_kernel_unchecked, KernelFamily, KernelSpec};
use crate::poly::Polynomial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingPath {
    #[default]
    Pushforward,
    CoefficientLinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnivariatePolyObjective {
    /// Degree 0 first.
    pub coefficients: Vec<f64>,
    pub scale_factor: f64,
    pub path: EmbeddingPath,
    /// `c_λξ K_ff c_λξᵀ`, the desired set's self inner product.
    pub desired_self: f64,
    /// The same polynomial as `Σ w·p(u)²`, used for evaluation. Expanding
    /// the squares cancels badly at high degree. Empty on the coefficient
    /// path.
    pub squares: Vec<(f64, Polynomial)>,
}

impl UnivariatePolyObjective {
    pub fn eval(&self, u: f64) -> f64 {
        if self.squares.is_empty() {
            return horner(&self.coefficients, u);
        }
        self.squares.iter().map(|(w, p)| w * p.eval(u).powi(2)).sum()
    }

    pub fn derivative_at(&self, u: f64) -> f64 {
        if self.squares.is_empty() {
            return self.polynomial().derivative().eval(u);
        }
        self.squares
            .iter()
            .map(|(w, p)| 2.0 * w * p.eval(u) * p.derivative().eval(u))
            .sum()
    }

    pub fn polynomial(&self) -> Polynomial {
        Polynomial::new(self.coefficients.clone())
    }

    pub fn degree(&self) -> usize {
        self.polynomial().degree()
    }

    /// Sum of several objectives (one per chance constraint).
    pub fn sum(objectives: &[UnivariatePolyObjective]) -> Result<Self> {
        let first = objectives.first().ok_or(Error::Empty("objective list"))?;
        let mut total = Polynomial::constant(0.0);
        for o in objectives {
            total.add_scaled(&o.polynomial(), 1.0);
        }
        let squares = if objectives.iter().all(|o| !o.squares.is_empty()) {
            objectives.iter().flat_map(|o| o.squares.iter().cloned()).collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            coefficients: total.coefficients().to_vec(),
            scale_factor: first.scale_factor,
            path: first.path,
            desired_self: objectives.iter().map(|o| o.desired_self).sum(),
            squares,
        })
    }
}

/// Median absolute value, or 1 for an all-zero pool.
pub fn robust_scale<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut abs: Vec<f64> = values.into_iter().map(f64::abs).filter(|v| v.is_finite()).collect();
    match crate::median(&mut abs) {
        Some(m) if m > 0.0 => m,
        _ => 1.0,
    }
}

/// The weighted set `{Σ_i H_i[p] uⁱ}` with weights `c_αβ`.
pub fn embed_at(cm: &CoefficientMatrices, u: f64) -> Result<WeightedSampleSet<f64>> {
    let values = (0..cm.len()).map(|p| horner(&cm.point(p), u)).collect();
    WeightedSampleSet::new(values, cm.product_weights.clone())
}

/// Affine analogue of [`embed_at`]: values `h + Σ_j h^j u_j`.
pub fn embed_affine_at(cm: &CoefficientMatrices, u: &[f64]) -> Result<WeightedSampleSet<f64>> {
    if cm.field_count() != u.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: cm.field_count() - 1,
            got: u.len(),
        });
    }
    let values = (0..cm.len()).map(|p| affine_value(&cm.point(p), u)).collect();
    WeightedSampleSet::new(values, cm.product_weights.clone())
}

fn check_poly_spec(spec: &KernelSpec) -> Result<()> {
    spec.validate()?;
    if spec.family != KernelFamily::PolynomialScalar {
        return Err(Error::InvalidInput("MMD objectives need a polynomial kernel".into()));
    }
    Ok(())
}

/// `Σ_p Σ_q a_p b_q k(x_p, y_q)`.
fn kernel_contraction(xs: &[f64], wx: &[f64], ys: &[f64], wy: &[f64], spec: &KernelSpec) -> f64 {
    xs.par_iter()
        .zip(wx.par_iter())
        .map(|(x, a)| {
            let row: f64 = ys
                .iter()
                .zip(wy)
                .map(|(y, b)| b * poly_kernel_unchecked(*x, *y, spec))
                .sum();
            a * row
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// Raw moments `D_k = Σ v_q y_q^k`, k = 0..=d.
fn raw_moments(values: &[f64], weights: &[f64], d: u32) -> Vec<f64> {
    let mut out = vec![0.0; d as usize + 1];
    for (y, v) in values.iter().zip(weights) {
        let mut pow = 1.0;
        for m in out.iter_mut() {
            *m += v * pow;
            pow *= y;
        }
    }
    out
}

pub fn assemble_univariate(
    cm: &CoefficientMatrices,
    desired: &DesiredDistribution,
    spec: &KernelSpec,
    path: EmbeddingPath,
) -> Result<UnivariatePolyObjective> {
    check_poly_spec(spec)?;
    if desired.u_nom.len() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: desired.u_nom.len(),
        });
    }
    if cm.is_empty() {
        return Err(Error::Empty("coefficient grid"));
    }
    let u_nom = desired.u_nom[0];
    let at_nom = embed_at(cm, u_nom)?;
    let scale = robust_scale(desired.set.values().iter().chain(at_nom.values()).copied());
    let inv = 1.0 / scale;
    let des_vals: Vec<f64> = desired.set.values().iter().map(|v| v * inv).collect();
    let des_w = desired.set.weights();
    let grid: Vec<Vec<f64>> = cm
        .points()
        .into_iter()
        .map(|p| p.into_iter().map(|h| h * inv).collect())
        .collect();
    let c = &cm.product_weights;
    let desired_self = kernel_contraction(&des_vals, des_w, &des_vals, des_w, spec);

    let mut squares = Vec::new();
    let coefficients = match path {
        EmbeddingPath::Pushforward => {
            let d = spec.degree;
            let target = raw_moments(&des_vals, des_w, d);
            // M_k(u) for k = 0..=d
            // fixed chunks keep the summation order independent of scheduling
            let zero = || vec![Polynomial::constant(0.0); d as usize + 1];
            let partial: Vec<Vec<Polynomial>> = grid
                .par_chunks(64)
                .zip(c.par_chunks(64))
                .map(|(gs, ws)| {
                    let mut acc = zero();
                    for (fields, w) in gs.iter().zip(ws) {
                        let f = Polynomial::new(fields.clone());
                        let mut pow = Polynomial::constant(1.0);
                        for m in acc.iter_mut() {
                            m.add_scaled(&pow, *w);
                            pow = &pow * &f;
                        }
                    }
                    acc
                })
                .collect();
            let mut moments = zero();
            for p in &partial {
                for (x, y) in moments.iter_mut().zip(p) {
                    x.add_scaled(y, 1.0);
                }
            }
            let mut total = Polynomial::constant(0.0);
            for (k, m) in moments.iter().enumerate() {
                let gap = m - &Polynomial::constant(target[k]);
                total.add_scaled(&gap.square(), spec.moment_weight(k as u32));
                squares.push((spec.moment_weight(k as u32), gap));
            }
            total.coefficients().to_vec()
        }
        EmbeddingPath::CoefficientLinear => {
            let fields = cm.field_count();
            let columns: Vec<Vec<f64>> = (0..fields).map(|i| grid.iter().map(|p| p[i]).collect()).collect();
            let mut coef = vec![0.0; 2 * (fields - 1) + 1];
            for i in 0..fields {
                for j in i..fields {
                    let inner = kernel_contraction(&columns[i], c, &columns[j], c, spec);
                    let mult = if i == j { 1.0 } else { 2.0 };
                    coef[i + j] += mult * inner;
                }
                let cross = kernel_contraction(&columns[i], c, &des_vals, des_w, spec);
                coef[i] -= 2.0 * cross;
            }
            coef[0] += desired_self;
            coef
        }
    };
    Ok(UnivariatePolyObjective {
        coefficients,
        scale_factor: scale,
        path,
        desired_self,
        squares,
    })
}

/// `uᵀ Q u + lᵀ u + c` with symmetric `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    pub quad: DMatrix<f64>,
    pub linear: Vec<f64>,
    pub constant: f64,
}

impl QuadraticObjective {
    /// Symmetrizes `quad`.
    pub fn new(quad: DMatrix<f64>, linear: Vec<f64>, constant: f64) -> Result<Self> {
        if quad.nrows() != quad.ncols() || quad.nrows() != linear.len() {
            return Err(Error::DimensionMismatch {
                expected: linear.len(),
                got: quad.nrows(),
            });
        }
        let quad = (&quad + quad.transpose()) * 0.5;
        Ok(Self { quad, linear, constant })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            quad: DMatrix::zeros(dim, dim),
            linear: vec![0.0; dim],
            constant: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        let n = self.dim();
        let mut v = self.constant;
        for i in 0..n {
            v += self.linear[i] * u[i];
            for j in 0..n {
                v += u[i] * self.quad[(i, j)] * u[j];
            }
        }
        v
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| self.linear[i] + 2.0 * (0..n).map(|j| self.quad[(i, j)] * u[j]).sum::<f64>())
            .collect()
    }

    /// `a · self + b · other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(Self {
            quad: &self.quad * a + &other.quad * b,
            linear: self
                .linear
                .iter()
                .zip(&other.linear)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            constant: a * self.constant + b * other.constant,
        })
    }

    /// `½‖A u − t‖²`.
    pub fn least_squares(a: &DMatrix<f64>, target: &[f64]) -> Result<Self> {
        if a.nrows() != target.len() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: target.len(),
            });
        }
        let t = nalgebra::DVector::from_column_slice(target);
        let quad = a.transpose() * a * 0.5;
        let linear = -(a.transpose() * &t);
        Self::new(quad, linear.iter().copied().collect(), 0.5 * t.dot(&t))
    }
}

/// One constraint's contribution to an affine MMD objective.
#[derive(Debug, Clone, PartialEq)]
struct AffineTerm {
    /// Scaled fields `[h, h^1, …, h^m] / s` per grid point.
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    /// Scaled desired raw moments `D_0..D_d`.
    target: Vec<f64>,
    scale: f64,
}

/// `Σ_i MMD²(μ_{P_{f_i}}(u), μ_{P^des_{f_i}})` for affine constraints, any
/// kernel degree. Value and gradient are evaluated directly from the grids.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMmdObjective {
    terms: Vec<AffineTerm>,
    spec: KernelSpec,
    dim: usize,
}

impl AffineMmdObjective {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale_factors(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.scale).collect()
    }

    fn moments(&self, term: &AffineTerm, u: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let d = self.spec.degree as usize;
        let mut m = vec![0.0; d + 1];
        let mut grad = vec![vec![0.0; self.dim]; d + 1];
        for (p, w) in term.points.iter().zip(&term.weights) {
            let f = affine_value(p, u);
            let mut pow_prev = 1.0; // f^(k-1)
            m[0] += w;
            for k in 1..=d {
                let pow = pow_prev * f;
                m[k] += w * pow;
                let coef = w * k as f64 * pow_prev;
                for (g, s) in grad[k].iter_mut().zip(&p[1..]) {
                    *g += coef * s;
                }
                pow_prev = pow;
            }
        }
        (m, grad)
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        self.value_and_gradient(u).0
    }

    pub fn value_and_gradient(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let mut v = 0.0;
        let mut g = vec![0.0; self.dim];
        for term in &self.terms {
            let (m, dm) = self.moments(term, u);
            for k in 0..m.len() {
                let w = self.spec.moment_weight(k as u32);
                let gap = m[k] - term.target[k];
                v += w * gap * gap;
                for (gi, di) in g.iter_mut().zip(&dm[k]) {
                    *gi += 2.0 * w * gap * di;
                }
            }
        }
        (v, g)
    }

    /// Exact quadratic form; only available for the degree-1 kernel.
    pub fn to_quadratic(&self) -> Result<QuadraticObjective> {
        if self.spec.degree != 1 {
            return Err(Error::InvalidInput(format!(
                "quadratic form needs kernel degree 1, got {}",
                self.spec.degree
            )));
        }
        let m = self.dim;
        let mut total = QuadraticObjective::zeros(m);
        let (w0, w1) = (self.spec.moment_weight(0), self.spec.moment_weight(1));
        for term in &self.terms {
            // M_1(u) = ā·u + b̄
            let mut abar = vec![0.0; m];
            let mut bbar = 0.0;
            let mut mass = 0.0;
            for (p, w) in term.points.iter().zip(&term.weights) {
                bbar += w * p[0];
                mass += w;
                for (a, s) in abar.iter_mut().zip(&p[1..]) {
                    *a += w * s;
                }
            }
            let r = bbar - term.target[1];
            for i in 0..m {
                total.linear[i] += w1 * 2.0 * r * abar[i];
                for j in 0..m {
                    total.quad[(i, j)] += w1 * abar[i] * abar[j];
                }
            }
            total.constant += w1 * r * r + w0 * (mass - term.target[0]).powi(2);
        }
        Ok(total)
    }
}

/// Builds the general affine objective from per-constraint grids and
/// desired distributions (one of each per constraint).
pub fn assemble_affine_general(
    grids: &[CoefficientMatrices],
    desired_list: &[DesiredDistribution],
    spec: &KernelSpec,
) -> Result<AffineMmdObjective> {
    check_poly_spec(spec)?;
    if grids.len() != desired_list.len() {
        return Err(Error::DimensionMismatch {
            expected: grids.len(),
            got: desired_list.len(),
        });
    }
    let first = grids.first().ok_or(Error::Empty("affine constraint list"))?;
    let dim = first.field_count() - 1;
    let mut terms = Vec::with_capacity(grids.len());
    for (cm, des) in grids.iter().zip(desired_list) {
        if cm.field_count() != dim + 1 || des.u_nom.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: des.u_nom.len(),
            });
        }
        let at_nom = embed_affine_at(cm, &des.u_nom)?;
        let scale = robust_scale(des.set.values().iter().chain(at_nom.values()).copied());
        let inv = 1.0 / scale;
        let points = cm
            .points()
            .into_iter()
            .map(|p| p.into_iter().map(|h| h * inv).collect())
            .collect();
        let des_vals: Vec<f64> = des.set.values().iter().map(|v| v * inv).collect();
        terms.push(AffineTerm {
            points,
            weights: cm.product_weights.clone(),
            target: raw_moments(&des_vals, des.set.weights(), spec.degree),
            scale,
        });
    }
    Ok(AffineMmdObjective {
        terms,
        spec: *spec,
        dim,
    })
}

/// Summed MMD² of affine constraints as an exact quadratic form (`d = 1`).
pub fn assemble_affine(
    grids: &[CoefficientMatrices],
    desired_list: &[DesiredDistribution],
    spec: &KernelSpec,
) -> Result<QuadraticObjective> {
    assemble_affine_general(grids, desired_list, spec)?.to_quadratic()
}
