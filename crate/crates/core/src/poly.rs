//! Dense univariate polynomials, coefficients ordered by increasing degree.

use std::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    coefficients: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coefficients: Vec<f64>) -> Self {
        if coefficients.is_empty() {
            coefficients.push(0.0);
        }
        Self { coefficients }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    /// `(u - center)²`.
    pub fn squared_deviation(center: f64) -> Self {
        Self::new(vec![center * center, -2.0 * center, 1.0])
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Degree ignoring exact-zero leading coefficients.
    pub fn degree(&self) -> usize {
        self.coefficients.iter().rposition(|c| *c != 0.0).unwrap_or(0)
    }

    pub fn eval(&self, u: f64) -> f64 {
        crate::constraint::horner(&self.coefficients, u)
    }

    pub fn derivative(&self) -> Self {
        if self.coefficients.len() <= 1 {
            return Self::constant(0.0);
        }
        Self::new(
            self.coefficients
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * i as f64)
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.coefficients.iter().map(|c| c * s).collect())
    }

    pub fn square(&self) -> Self {
        self * self
    }

    /// Adds `s · other` in place.
    pub fn add_scaled(&mut self, other: &Self, s: f64) {
        if other.coefficients.len() > self.coefficients.len() {
            self.coefficients.resize(other.coefficients.len(), 0.0);
        }
        for (a, b) in self.coefficients.iter_mut().zip(&other.coefficients) {
            *a += s * b;
        }
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        out.add_scaled(rhs, 1.0);
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        out.add_scaled(rhs, -1.0);
        out
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let (a, b) = (&self.coefficients, &rhs.coefficients);
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            if *x == 0.0 {
                continue;
            }
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        Polynomial::new(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        let p = Polynomial::new(vec![1.0, 2.0]);
        let q = Polynomial::new(vec![-1.0, 0.0, 3.0]);
        assert_eq!((&p * &q).coefficients(), &[-1.0, -2.0, 3.0, 6.0]);
        assert_eq!((&p + &q).coefficients(), &[0.0, 2.0, 3.0]);
        assert_eq!((&q - &p).coefficients(), &[-2.0, -2.0, 3.0]);
        assert_eq!(q.derivative().coefficients(), &[0.0, 6.0]);
        assert_eq!(q.degree(), 2);
        assert_eq!(Polynomial::new(vec![1.0, 0.0, 0.0]).degree(), 0);
    }

    #[test]
    fn squared_deviation_vanishes_at_center() {
        let p = Polynomial::squared_deviation(1.0);
        assert_eq!(p.eval(1.0), 0.0);
        assert_eq!(p.eval(3.0), 4.0);
    }
}
