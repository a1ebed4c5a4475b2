//! Minimizers of `ρ1·MMD² + ρ2·J`, the baseline chance-constraint solvers,
//! and Monte-Carlo validation of the achieved satisfaction probability.

mod baselines;
mod validate;

use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{QuadraticObjective, UnivariatePolyObjective};
use crate::poly::Polynomial;

pub use baselines::{
    baseline_mean_var, baseline_saa, baseline_scenario, cantelli_bounds, cantelli_epsilon, mean_var_polynomials,
    MeanVarPolynomials,
};
pub use validate::{validate_eta, validate_joint, Pairing};

pub const DEFAULT_HORIZON: f64 = 5.0;
pub const DEFAULT_GRID_RESOLUTION: f64 = 1e-3;
pub const PGD_MAX_ITERS: usize = 100_000;
pub const PGD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Bounds {
    /// `[lo, hi]`.
    Interval { lo: f64, hi: f64 },
    /// `[lo, ∞)`, truncated at the configured horizon for scans.
    HalfLine { lo: f64 },
    /// Coordinate box.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Bounds {
    /// Compact scalar interval; half-lines are cut at `lo + horizon`.
    pub fn scalar_interval(&self, horizon: f64) -> Result<(f64, f64)> {
        let (lo, hi) = match self {
            Self::Interval { lo, hi } => (*lo, *hi),
            Self::HalfLine { lo } => (*lo, lo + horizon),
            Self::Box { lo, hi } if lo.len() == 1 && hi.len() == 1 => (lo[0], hi[0]),
            Self::Box { lo, .. } => {
                return Err(Error::DimensionMismatch {
                    expected: 1,
                    got: lo.len(),
                })
            }
        };
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInput(format!("empty or unbounded interval [{lo}, {hi}]")));
        }
        Ok((lo, hi))
    }

    pub fn boxed(&self, dim: usize, horizon: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::Box { lo, hi } => {
                if lo.len() != dim || hi.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: lo.len(),
                    });
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
                    return Err(Error::InvalidInput("empty box".into()));
                }
                Ok((lo.clone(), hi.clone()))
            }
            _ => {
                let (lo, hi) = self.scalar_interval(horizon)?;
                Ok((vec![lo; dim], vec![hi; dim]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rho1: f64,
    pub rho2: f64,
    pub degree: u32,
    /// Reporting only, and the default for the mean-variance `ε`.
    pub target_eta: f64,
    pub bounds: Bounds,
    pub horizon: f64,
    pub grid_resolution: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho1: 1.0,
            rho2: 1.0,
            degree: 2,
            target_eta: 0.9,
            bounds: Bounds::HalfLine { lo: 0.0 },
            horizon: DEFAULT_HORIZON,
            grid_resolution: DEFAULT_GRID_RESOLUTION,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho1 >= 0.0 && self.rho2 >= 0.0) || !(self.rho1 + self.rho2 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "weights must be nonnegative with a positive sum, got rho1={}, rho2={}",
                self.rho1, self.rho2
            )));
        }
        if !(self.grid_resolution > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::InvalidInput(
                "grid resolution and horizon must be positive".into(),
            ));
        }
        if !(self.target_eta > 0.0 && self.target_eta < 1.0) {
            return Err(Error::InvalidInput(format!(
                "target_eta must lie in (0, 1), got {}",
                self.target_eta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SampleBudget {
    /// Samples per uncertain parameter used for the embedding.
    pub n: usize,
    pub n_w1: usize,
    pub n_w2: usize,
    pub n_holdout: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub u_star: Vec<f64>,
    pub objective_value: f64,
    pub mmd_value: f64,
    pub cost_value: f64,
    /// Weights the objective was assembled with.
    pub rho1: f64,
    pub rho2: f64,
    /// Held-out satisfaction fraction, once validated.
    pub empirical_eta: Option<f64>,
    /// Per-constraint satisfaction fractions, when there are several.
    pub constraint_eta: Vec<f64>,
    pub samples_used: SampleBudget,
    pub wall_time: Duration,
    /// False when an iterative solver hit its iteration cap.
    pub converged: bool,
    /// Set when the decision is a safety fallback rather than a solve.
    pub fallback: bool,
}

impl SolverReport {
    pub fn new(u_star: Vec<f64>, rho1: f64, rho2: f64, mmd_value: f64, cost_value: f64) -> Self {
        Self {
            u_star,
            objective_value: rho1 * mmd_value + rho2 * cost_value,
            mmd_value,
            cost_value,
            rho1,
            rho2,
            empirical_eta: None,
            constraint_eta: Vec::new(),
            samples_used: SampleBudget::default(),
            wall_time: Duration::ZERO,
            converged: true,
            fallback: false,
        }
    }

    /// Report for a baseline that only minimizes `J`.
    pub fn cost_only(u_star: Vec<f64>, cost_value: f64) -> Self {
        Self::new(u_star, 0.0, 1.0, 0.0, cost_value)
    }
}

/// Grid points `lo, lo + h, …, hi` (the last step may be short).
pub fn scan_grid(lo: f64, hi: f64, resolution: f64) -> Vec<f64> {
    let steps = ((hi - lo) / resolution).ceil().max(0.0) as usize;
    let mut g: Vec<f64> = (0..=steps).map(|k| (lo + k as f64 * resolution).min(hi)).collect();
    g.dedup();
    g
}

/// Global minimizer of a polynomial on `[lo, hi]`: dense scan, then every
/// grid-local minimum is refined to the stationary point in its bracket.
/// Ties go to the smaller `u`.
pub fn minimize_polynomial(p: &Polynomial, lo: f64, hi: f64, resolution: f64) -> f64 {
    let dp = p.derivative();
    minimize_scalar(|u| p.eval(u), |u| dp.eval(u), lo, hi, resolution)
}

/// [`minimize_polynomial`] for any smooth `f` with derivative `df`.
pub fn minimize_scalar<F, G>(f: F, df: G, lo: f64, hi: f64, resolution: f64) -> f64
where
    F: Fn(f64) -> f64 + Sync,
    G: Fn(f64) -> f64,
{
    let grid = scan_grid(lo, hi, resolution);
    let vals: Vec<f64> = grid.par_iter().map(|u| f(*u)).collect();
    let mut best = (vals[0], grid[0]);
    let mut consider = |u: f64| {
        let v = f(u);
        if v < best.0 || (v == best.0 && u < best.1) {
            best = (v, u);
        }
    };
    let n = grid.len();
    for k in 0..n {
        let left = if k > 0 { vals[k - 1] } else { f64::INFINITY };
        let right = if k + 1 < n { vals[k + 1] } else { f64::INFINITY };
        if vals[k] > left || vals[k] > right {
            continue;
        }
        consider(grid[k]);
        let a = grid[k.saturating_sub(1)];
        let b = grid[(k + 1).min(n - 1)];
        for (x, y) in [(a, grid[k]), (grid[k], b)] {
            let (dx, dy) = (df(x), df(y));
            if x < y && dx < 0.0 && dy > 0.0 {
                consider(bisect(&df, x, y, dx));
            }
        }
    }
    best.1
}

fn bisect<G: Fn(f64) -> f64>(df: &G, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = df(mid);
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

/// `min ρ1·obj(u) + ρ2·J(u)` over the configured scalar bounds.
pub fn minimize_univariate(obj: &Polynomial, j: &Polynomial, cfg: &SolverConfig) -> Result<SolverReport> {
    let dobj = obj.derivative();
    minimize_with(|u| obj.eval(u), |u| dobj.eval(u), j, cfg)
}

/// [`minimize_univariate`] on an assembled MMD objective, evaluated in its
/// sum-of-squares form.
pub fn minimize_objective(obj: &UnivariatePolyObjective, j: &Polynomial, cfg: &SolverConfig) -> Result<SolverReport> {
    minimize_with(|u| obj.eval(u), |u| obj.derivative_at(u), j, cfg)
}

fn minimize_with<F, G>(obj: F, dobj: G, j: &Polynomial, cfg: &SolverConfig) -> Result<SolverReport>
where
    F: Fn(f64) -> f64 + Sync,
    G: Fn(f64) -> f64,
{
    cfg.validate()?;
    let start = std::time::Instant::now();
    let (lo, hi) = cfg.bounds.scalar_interval(cfg.horizon)?;
    let dj = j.derivative();
    let (r1, r2) = (cfg.rho1, cfg.rho2);
    let u = minimize_scalar(
        |u| r1 * obj(u) + r2 * j.eval(u),
        |u| r1 * dobj(u) + r2 * dj.eval(u),
        lo,
        hi,
        cfg.grid_resolution,
    );
    let mut report = SolverReport::new(vec![u], r1, r2, obj(u), j.eval(u));
    report.wall_time = start.elapsed();
    Ok(report)
}

fn clip(u: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((x, a), b) in u.iter_mut().zip(lo).zip(hi) {
        *x = x.clamp(*a, *b);
    }
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn power_iteration(a: &DMatrix<f64>, iters: usize) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = a * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&w);
        v = w / norm;
    }
    // Power iteration converges from below; pad slightly so 1/L stays safe.
    lambda.max(0.0) * 1.01 + f64::EPSILON
}

/// Projected gradient descent with step `1/L` on a box-constrained convex
/// quadratic. Returns the iterate and whether the displacement test passed.
pub fn projected_gradient_quadratic(q: &QuadraticObjective, lo: &[f64], hi: &[f64], start: &[f64]) -> (Vec<f64>, bool) {
    let mut quad = q.quad.clone();
    let n = q.dim();
    for i in 0..n {
        quad[(i, i)] += 1e-10;
    }
    // ∇ = 2Qu + l, Lipschitz constant 2λmax(Q).
    let l = 2.0 * power_iteration(&quad, 200);
    if l <= f64::EPSILON {
        // Linear objective: the box corner it points to.
        let u = (0..n)
            .map(|i| {
                if q.linear[i] > 0.0 {
                    lo[i]
                } else if q.linear[i] < 0.0 {
                    hi[i]
                } else {
                    start[i].clamp(lo[i], hi[i])
                }
            })
            .collect();
        return (u, true);
    }
    let step = 1.0 / l;
    let mut u = start.to_vec();
    clip(&mut u, lo, hi);
    for _ in 0..PGD_MAX_ITERS {
        let g = q.gradient(&u);
        let mut next: Vec<f64> = u.iter().zip(&g).map(|(x, d)| x - step * d).collect();
        clip(&mut next, lo, hi);
        let disp = next.iter().zip(&u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        u = next;
        if disp < PGD_TOL {
            return (u, true);
        }
    }
    (u, false)
}

/// `min ρ1·obj(u) + ρ2·J(u)` over a box, both quadratic.
pub fn minimize_box_quadratic(
    obj: &QuadraticObjective,
    j: &QuadraticObjective,
    cfg: &SolverConfig,
) -> Result<SolverReport> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let (lo, hi) = cfg.bounds.boxed(obj.dim(), cfg.horizon)?;
    let total = obj.combine(cfg.rho1, j, cfg.rho2)?;
    let init: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.0f64.clamp(*a, *b)).collect();
    let (u, converged) = projected_gradient_quadratic(&total, &lo, &hi, &init);
    if !converged {
        log::warn!("box QP hit {PGD_MAX_ITERS} iterations");
    }
    let mut report = SolverReport::new(u.clone(), cfg.rho1, cfg.rho2, obj.value(&u), j.value(&u));
    report.converged = converged;
    report.wall_time = start.elapsed();
    Ok(report)
}

/// Projected gradient descent with Armijo backtracking for a smooth
/// objective on a box.
pub fn projected_gradient_smooth<F>(f: F, lo: &[f64], hi: &[f64], start: &[f64], max_iters: usize) -> (Vec<f64>, bool)
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut u = start.to_vec();
    clip(&mut u, lo, hi);
    let (mut val, mut grad) = f(&u);
    let mut step = 1.0;
    for _ in 0..max_iters {
        let mut accepted = false;
        let mut next = u.clone();
        let mut next_val = val;
        for _ in 0..60 {
            next = u.iter().zip(&grad).map(|(x, g)| x - step * g).collect();
            clip(&mut next, lo, hi);
            let decrease: f64 = grad.iter().zip(&next).zip(&u).map(|((g, a), b)| g * (a - b)).sum();
            next_val = f(&next).0;
            if next_val <= val + 1e-4 * decrease {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        let disp = next.iter().zip(&u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if !accepted || disp < PGD_TOL {
            return (u, true);
        }
        u = next;
        let (v, g) = f(&u);
        val = v;
        grad = g;
        debug_assert!(val <= next_val + 1e-12 * (1.0 + next_val.abs()));
        step *= 2.0;
    }
    (u, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(rho1: f64, rho2: f64) -> SolverConfig {
        SolverConfig {
            rho1,
            rho2,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn cost_only_minimizer() {
        let r = minimize_univariate(
            &Polynomial::constant(0.0),
            &Polynomial::squared_deviation(1.0),
            &cfg(0.0, 1.0),
        )
        .unwrap();
        assert!((r.u_star[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quartic_minimizer() {
        // (u − 2)⁴
        let q = Polynomial::new(vec![16.0, -32.0, 24.0, -8.0, 1.0]);
        let r = minimize_univariate(&q, &Polynomial::constant(0.0), &cfg(1.0, 0.0)).unwrap();
        assert!((r.u_star[0] - 2.0).abs() < 1e-4, "{}", r.u_star[0]);
        assert!((r.objective_value - (r.rho1 * r.mmd_value + r.rho2 * r.cost_value)).abs() < 1e-12);
    }

    #[test]
    fn box_qp_examples() {
        let mut c = cfg(1.0, 1.0);
        c.bounds = Bounds::Box {
            lo: vec![-1.0; 2],
            hi: vec![1.0; 2],
        };
        let id = QuadraticObjective::new(DMatrix::identity(2, 2), vec![0.0; 2], 0.0).unwrap();
        let zero = QuadraticObjective::zeros(2);
        let r = minimize_box_quadratic(&id, &zero, &c).unwrap();
        assert!(r.u_star.iter().all(|x| x.abs() < 1e-9));
        // (u1 − 3)² + u2²
        let shifted = QuadraticObjective::new(DMatrix::identity(2, 2), vec![-6.0, 0.0], 9.0).unwrap();
        let r = minimize_box_quadratic(&shifted, &zero, &c).unwrap();
        assert!((r.u_star[0] - 1.0).abs() < 1e-9 && r.u_star[1].abs() < 1e-9);
        assert!(r.converged);
    }

    #[test]
    fn smooth_pgd_on_quadratic() {
        let f = |u: &[f64]| {
            (
                (u[0] - 0.3).powi(2) + 4.0 * (u[1] + 2.0).powi(2),
                vec![2.0 * (u[0] - 0.3), 8.0 * (u[1] + 2.0)],
            )
        };
        let (u, ok) = projected_gradient_smooth(f, &[-1.0, -1.0], &[1.0, 1.0], &[0.0, 0.0], 10_000);
        assert!(ok);
        assert!((u[0] - 0.3).abs() < 1e-6 && (u[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_includes_endpoints() {
        let g = scan_grid(0.0, 1.0, 0.3);
        assert_eq!(g.first(), Some(&0.0));
        assert_eq!(g.last(), Some(&1.0));
        assert_eq!(g.len(), 5);
    }
}
