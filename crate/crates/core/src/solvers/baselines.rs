//! Baseline chance-constraint solvers for scalar decisions: scenario over
//! all samples, sample average approximation by grid enumeration, and the
//! mean-variance (Cantelli) surrogate.

use rayon::prelude::*;

use super::{scan_grid, SolverConfig, SolverReport};
use crate::desired::{solve_scenario, ScenarioCost, ScenarioTerm};
use crate::error::{Error, Result};
use crate::poly::Polynomial;

/// Scenario program with every `(w1, w2)` pair of every term as a hard
/// constraint. Returns an infeasible-scenario error when the pairs admit no
/// common decision.
pub fn baseline_scenario(terms: &[ScenarioTerm<'_>], cost: &ScenarioCost) -> Result<SolverReport> {
    let start = std::time::Instant::now();
    let first = terms.first().ok_or(Error::Empty("scenario terms"))?;
    let idx1: Vec<usize> = (0..first.w1.len()).collect();
    let idx2: Vec<usize> = (0..first.w2.len()).collect();
    let u = solve_scenario(terms, &idx1, &idx2, cost)?;
    let j = match cost {
        ScenarioCost::Scalar { cost, .. } => cost.eval(u[0]),
        ScenarioCost::Affine { cost, .. } => cost.value(&u),
    };
    let mut report = SolverReport::cost_only(u, j);
    report.wall_time = start.elapsed();
    Ok(report)
}

/// Fraction of index pairs `(i, j)` at which every term satisfies `f ≤ 0`.
fn satisfied_fraction(terms: &[ScenarioTerm<'_>], fields: &[Vec<Vec<f64>>], u: f64) -> f64 {
    let pairs = fields[0].len();
    let ok = (0..pairs)
        .filter(|&p| {
            terms
                .iter()
                .zip(fields)
                .all(|(t, f)| t.constraint.value(&f[p], &[u]) <= 0.0)
        })
        .count();
    ok as f64 / pairs as f64
}

fn all_fields(terms: &[ScenarioTerm<'_>]) -> Result<Vec<Vec<Vec<f64>>>> {
    let first = terms.first().ok_or(Error::Empty("scenario terms"))?;
    if first.w1.is_empty() || first.w2.is_empty() {
        return Err(Error::Empty("sample pool"));
    }
    terms
        .iter()
        .map(|t| {
            if t.w1.len() != first.w1.len() || t.w2.len() != first.w2.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.w1.len() * first.w2.len(),
                    got: t.w1.len() * t.w2.len(),
                });
            }
            Ok(t.w1
                .par_iter()
                .flat_map_iter(|a| t.w2.iter().map(move |b| t.constraint.fields(a, b)))
                .collect())
        })
        .collect()
}

/// Lowest-`J` grid point whose empirical satisfaction fraction over all
/// sample pairs is at least `gamma`. Ties go to the smaller `u`.
pub fn baseline_saa(
    terms: &[ScenarioTerm<'_>],
    j: &Polynomial,
    gamma: f64,
    cfg: &SolverConfig,
) -> Result<SolverReport> {
    let start = std::time::Instant::now();
    let (lo, hi) = cfg.bounds.scalar_interval(cfg.horizon)?;
    let fields = all_fields(terms)?;
    let mut grid: Vec<(f64, f64)> = scan_grid(lo, hi, cfg.grid_resolution)
        .into_iter()
        .map(|u| (j.eval(u), u))
        .collect();
    grid.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    // Evaluate in J order, a chunk at a time, and stop at the first hit.
    for chunk in grid.chunks(256) {
        let hit = chunk
            .par_iter()
            .map(|(_, u)| satisfied_fraction(terms, &fields, *u))
            .collect::<Vec<_>>()
            .into_iter()
            .zip(chunk)
            .find(|(frac, _)| *frac >= gamma);
        if let Some((frac, (cost, u))) = hit {
            let mut report = SolverReport::cost_only(vec![*u], *cost);
            report.empirical_eta = None;
            report.constraint_eta = vec![frac];
            report.wall_time = start.elapsed();
            return Ok(report);
        }
    }
    Err(Error::Infeasible(format!(
        "no grid point reaches satisfaction fraction {gamma}"
    )))
}

/// Sample mean and variance of `f(·, ·, u)` over all pairs, as polynomials.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanVarPolynomials {
    pub mean: Polynomial,
    pub second_moment: Polynomial,
}

impl MeanVarPolynomials {
    pub fn variance(&self, u: f64) -> f64 {
        (self.second_moment.eval(u) - self.mean.eval(u).powi(2)).max(0.0)
    }
}

pub fn mean_var_polynomials(term: &ScenarioTerm<'_>) -> Result<MeanVarPolynomials> {
    let fields = all_fields(std::slice::from_ref(term))?.remove(0);
    let w = 1.0 / fields.len() as f64;
    let mut mean = Polynomial::constant(0.0);
    let mut second = Polynomial::constant(0.0);
    for f in &fields {
        let p = Polynomial::new(f.clone());
        mean.add_scaled(&p, w);
        second.add_scaled(&p.square(), w);
    }
    Ok(MeanVarPolynomials {
        mean,
        second_moment: second,
    })
}

/// `(ε/(1+ε²), ε²/(1+ε²))`: the bound as usually quoted for this surrogate,
/// and the one-sided Cantelli bound.
pub fn cantelli_bounds(epsilon: f64) -> (f64, f64) {
    let e2 = epsilon * epsilon;
    (epsilon / (1.0 + e2), e2 / (1.0 + e2))
}

/// `ε` with `ε²/(1+ε²) = η`.
pub fn cantelli_epsilon(eta: f64) -> f64 {
    (eta / (1.0 - eta)).sqrt()
}

/// `min J(u)` over grid points where `E[f] + ε·sqrt(Var f) ≤ 0` for every
/// term. The report's `constraint_eta` carries the two implied bounds.
pub fn baseline_mean_var(
    terms: &[ScenarioTerm<'_>],
    epsilon: f64,
    j: &Polynomial,
    cfg: &SolverConfig,
) -> Result<SolverReport> {
    let start = std::time::Instant::now();
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let (lo, hi) = cfg.bounds.scalar_interval(cfg.horizon)?;
    let mv: Vec<MeanVarPolynomials> = terms.iter().map(mean_var_polynomials).collect::<Result<_>>()?;
    let feasible = |u: f64| {
        mv.iter()
            .all(|m| m.mean.eval(u) + epsilon * m.variance(u).sqrt() <= 0.0)
    };
    let best = scan_grid(lo, hi, cfg.grid_resolution)
        .into_iter()
        .filter(|u| feasible(*u))
        .map(|u| (j.eval(u), u))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let (cost, u) =
        best.ok_or_else(|| Error::Infeasible(format!("mean-variance constraint with epsilon {epsilon}")))?;
    let (quoted, cantelli) = cantelli_bounds(epsilon);
    let mut report = SolverReport::cost_only(vec![u], cost);
    report.constraint_eta = vec![quoted, cantelli];
    report.wall_time = start.elapsed();
    Ok(report)
}
