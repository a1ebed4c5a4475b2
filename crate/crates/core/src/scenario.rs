//! Deterministic scenario programs: minimize a cost subject to `f ≤ 0` at
//! every sampled scenario.
//!
//! Scalar decisions with constraints of order ≤ 2 are solved exactly by
//! intersecting the per-scenario feasible interval sets. Vector decisions
//! with affine constraints are solved exactly for `m ≤ 2` by clipping the box
//! polygon with every half-plane and minimizing the convex quadratic cost
//! over the resulting polygon.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::objective::QuadraticObjective;
use crate::poly::Polynomial;

/// Scenario constraints are accepted up to this violation.
pub const VIOLATION_TOL: f64 = 1e-9;

/// Sorted, disjoint closed intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet {
    intervals: Vec<(f64, f64)>,
}

impl IntervalSet {
    pub fn new(lo: f64, hi: f64) -> Self {
        if lo <= hi {
            Self {
                intervals: vec![(lo, hi)],
            }
        } else {
            Self { intervals: vec![] }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn contains(&self, u: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a <= u && u <= b)
    }

    fn clip(&mut self, lo: f64, hi: f64) {
        self.intervals = self
            .intervals
            .iter()
            .filter_map(|&(a, b)| {
                let (a, b) = (a.max(lo), b.min(hi));
                (a <= b).then_some((a, b))
            })
            .collect();
    }

    /// Removes the open interval `(lo, hi)`.
    fn remove_open(&mut self, lo: f64, hi: f64) {
        let mut out = Vec::with_capacity(self.intervals.len() + 1);
        for &(a, b) in &self.intervals {
            if b <= lo || a >= hi {
                out.push((a, b));
                continue;
            }
            if a <= lo {
                out.push((a, lo));
            }
            if b >= hi {
                out.push((hi, b));
            }
        }
        self.intervals = out;
    }

    /// Intersects with `{u : c0 + c1 u + c2 u² ≤ 0}`.
    pub fn intersect_quadratic(&mut self, c0: f64, c1: f64, c2: f64) {
        if self.is_empty() {
            return;
        }
        if c2 == 0.0 {
            if c1 > 0.0 {
                self.clip(f64::NEG_INFINITY, -c0 / c1);
            } else if c1 < 0.0 {
                self.clip(-c0 / c1, f64::INFINITY);
            } else if c0 > 0.0 {
                self.intervals.clear();
            }
            return;
        }
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc < 0.0 {
            if c2 > 0.0 {
                self.intervals.clear();
            }
            return;
        }
        let (r1, r2) = quadratic_roots(c0, c1, c2, disc);
        if c2 > 0.0 {
            self.clip(r1, r2);
        } else {
            self.remove_open(r1, r2);
        }
    }

    /// Minimizes `cost` over the set. Ties go to the smallest `u`.
    pub fn argmin(&self, cost: &Polynomial) -> Option<f64> {
        let mut candidates: Vec<f64> = Vec::new();
        let deriv = cost.derivative();
        for &(a, b) in &self.intervals {
            candidates.push(a);
            candidates.push(b);
            candidates.extend(stationary_points(&deriv, a, b));
        }
        candidates
            .into_iter()
            .filter(|u| u.is_finite())
            .map(|u| (cost.eval(u), u))
            .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)))
            .map(|(_, u)| u)
    }
}

/// Real roots (ascending) of `c0 + c1 u + c2 u²` given a nonnegative
/// discriminant, using the cancellation-free form.
fn quadratic_roots(c0: f64, c1: f64, c2: f64, disc: f64) -> (f64, f64) {
    let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
    if q == 0.0 {
        return (0.0, 0.0);
    }
    let (x1, x2) = (q / c2, c0 / q);
    (x1.min(x2), x1.max(x2))
}

/// Roots of `deriv` inside `[a, b]`: closed form up to degree 1, otherwise
/// sign-change bracketing on a fine partition followed by bisection.
fn stationary_points(deriv: &Polynomial, a: f64, b: f64) -> Vec<f64> {
    let c = deriv.coefficients();
    match deriv.degree() {
        0 => vec![],
        1 => {
            let u = -c[0] / c[1];
            if a <= u && u <= b {
                vec![u]
            } else {
                vec![]
            }
        }
        _ => {
            if !(a.is_finite() && b.is_finite()) {
                return vec![];
            }
            let steps = 512;
            let h = (b - a) / steps as f64;
            let mut out = vec![];
            let mut x0 = a;
            let mut f0 = deriv.eval(x0);
            for i in 1..=steps {
                let x1 = if i == steps { b } else { a + h * i as f64 };
                let f1 = deriv.eval(x1);
                if f0 == 0.0 {
                    out.push(x0);
                } else if f0 * f1 < 0.0 {
                    out.push(bisect(deriv, x0, x1, f0));
                }
                x0 = x1;
                f0 = f1;
            }
            out
        }
    }
}

fn bisect(p: &Polynomial, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = p.eval(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves `min J(u)` over `[lo, hi]` subject to
/// `c0 + c1 u + c2 u² ≤ 0` for every coefficient triple.
pub fn solve_scalar<'a, I>(coefficients: I, lo: f64, hi: f64, cost: &Polynomial) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut set = IntervalSet::new(lo, hi);
    for c in coefficients {
        if c.len() > 3 {
            return Err(Error::InvalidInput(format!(
                "scenario constraints must have order <= 2, got {}",
                c.len() - 1
            )));
        }
        let get = |i: usize| c.get(i).copied().unwrap_or(0.0);
        set.intersect_quadratic(get(0), get(1), get(2));
        if set.is_empty() {
            return Err(Error::InfeasibleScenario(
                "scenario constraints have empty intersection".into(),
            ));
        }
    }
    set.argmin(cost)
        .ok_or_else(|| Error::InfeasibleScenario("no finite minimizer".into()))
}

/// One affine scenario constraint `a·u + b ≤ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// `min uᵀQu + lᵀu + c` over `lo ≤ u ≤ hi` and the given half-spaces.
pub fn solve_affine(rows: &[HalfSpace], lo: &[f64], hi: &[f64], cost: &QuadraticObjective) -> Result<Vec<f64>> {
    let m = lo.len();
    if hi.len() != m || cost.dim() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: cost.dim(),
        });
    }
    match m {
        1 => {
            let mut set = IntervalSet::new(lo[0], hi[0]);
            for r in rows {
                set.intersect_quadratic(r.offset, r.normal[0], 0.0);
                if set.is_empty() {
                    return Err(Error::InfeasibleScenario("empty feasible interval".into()));
                }
            }
            let j = Polynomial::new(vec![cost.constant, cost.linear[0], cost.quad[(0, 0)]]);
            set.argmin(&j)
                .map(|u| vec![u])
                .ok_or_else(|| Error::InfeasibleScenario("no finite minimizer".into()))
        }
        2 => solve_planar(rows, lo, hi, cost),
        _ => Err(Error::InvalidInput(format!(
            "affine scenario programs are supported for up to 2 decision variables, got {m}"
        ))),
    }
}

type Point = [f64; 2];

fn clip_polygon(poly: &[Point], a: [f64; 2], b: f64) -> Vec<Point> {
    let side = |p: &Point| a[0] * p[0] + a[1] * p[1] + b;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (sp, sq) = (side(&p), side(&q));
        if sp <= 0.0 {
            out.push(p);
        }
        if (sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

fn solve_planar(rows: &[HalfSpace], lo: &[f64], hi: &[f64], cost: &QuadraticObjective) -> Result<Vec<f64>> {
    let mut poly: Vec<Point> = vec![[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]];
    for r in rows {
        poly = clip_polygon(&poly, [r.normal[0], r.normal[1]], r.offset);
        if poly.is_empty() {
            return Err(Error::InfeasibleScenario("empty feasible polygon".into()));
        }
    }
    let value = |p: &Point| cost.value(p);
    let inside = |p: &Point| {
        p[0] >= lo[0]
            && p[0] <= hi[0]
            && p[1] >= lo[1]
            && p[1] <= hi[1]
            && rows
                .iter()
                .all(|r| r.normal[0] * p[0] + r.normal[1] * p[1] + r.offset <= VIOLATION_TOL)
    };

    let mut best: Option<(f64, Point)> = None;
    let mut consider = |p: Point| {
        let v = value(&p);
        let better = match best {
            None => true,
            Some((bv, bp)) => v < bv || (v == bv && (p[0], p[1]) < (bp[0], bp[1])),
        };
        if better {
            best = Some((v, p));
        }
    };

    // Interior stationary point of the (ridged) quadratic.
    let q = DMatrix::from_fn(2, 2, |i, j| cost.quad[(i, j)] + if i == j { 1e-12 } else { 0.0 });
    if let Some(inv) = q.try_inverse() {
        let u = -0.5 * inv * DVector::from_column_slice(&cost.linear);
        let p = [u[0], u[1]];
        if inside(&p) {
            consider(p);
        }
    }
    for i in 0..poly.len() {
        let (p0, p1) = (poly[i], poly[(i + 1) % poly.len()]);
        consider(p0);
        let d = [p1[0] - p0[0], p1[1] - p0[1]];
        // q(p0 + t d) = A t² + B t + const
        let qd = [
            cost.quad[(0, 0)] * d[0] + cost.quad[(0, 1)] * d[1],
            cost.quad[(1, 0)] * d[0] + cost.quad[(1, 1)] * d[1],
        ];
        let a = d[0] * qd[0] + d[1] * qd[1];
        let grad = cost.gradient(&p0);
        let b = grad[0] * d[0] + grad[1] * d[1];
        if a > 0.0 {
            let t = (-b / (2.0 * a)).clamp(0.0, 1.0);
            consider([p0[0] + t * d[0], p0[1] + t * d[1]]);
        }
    }
    best.map(|(_, p)| p.to_vec())
        .ok_or_else(|| Error::InfeasibleScenario("no minimizer".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_from_convex_quadratic() {
        // u² - 1 ≤ 0 on [0, 10], J = (u - 1)²  ->  1
        let u = solve_scalar([&[-1.0, 0.0, 1.0][..]], 0.0, 10.0, &Polynomial::squared_deviation(1.0)).unwrap();
        assert!((u - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_lower_bound() {
        // 2 - u ≤ 0, J = (u - 1)²  ->  2
        let u = solve_scalar([&[2.0, -1.0][..]], 0.0, 10.0, &Polynomial::squared_deviation(1.0)).unwrap();
        assert!((u - 2.0).abs() < 1e-12);
    }

    #[test]
    fn concave_constraint_splits_interval() {
        // -(u - 1)² + 0.25 ≤ 0  <=>  |u - 1| ≥ 0.5
        let mut set = IntervalSet::new(0.0, 3.0);
        set.intersect_quadratic(-0.75, 2.0, -1.0);
        assert_eq!(set.intervals().len(), 2);
        assert!((set.intervals()[0].1 - 0.5).abs() < 1e-12);
        assert!((set.intervals()[1].0 - 1.5).abs() < 1e-12);
        // equal distance from both boundaries: the smaller u wins
        assert!((set.argmin(&Polynomial::squared_deviation(1.0)).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn infeasible_is_reported() {
        let r = solve_scalar([&[1.0, 0.0, 0.0][..]], 0.0, 1.0, &Polynomial::squared_deviation(1.0));
        assert!(matches!(r, Err(Error::InfeasibleScenario(_))));
    }

    #[test]
    fn planar_qp_with_halfspace() {
        // min ‖u - (2, 2)‖² s.t. u0 + u1 ≤ 1, box [-5, 5]²  ->  (0.5, 0.5)
        let cost = QuadraticObjective::new(DMatrix::identity(2, 2), vec![-4.0, -4.0], 8.0).unwrap();
        let rows = [HalfSpace {
            normal: vec![1.0, 1.0],
            offset: -1.0,
        }];
        let u = solve_affine(&rows, &[-5.0, -5.0], &[5.0, 5.0], &cost).unwrap();
        assert!((u[0] - 0.5).abs() < 1e-9 && (u[1] - 0.5).abs() < 1e-9, "{u:?}");
    }

    #[test]
    fn planar_qp_box_only() {
        let cost = QuadraticObjective::new(DMatrix::identity(2, 2), vec![-6.0, 0.0], 9.0).unwrap();
        let u = solve_affine(&[], &[-1.0, -1.0], &[1.0, 1.0], &cost).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-12 && u[1].abs() < 1e-12);
    }
}
