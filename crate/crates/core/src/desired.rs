//! Desired distribution of a chance constraint.
//!
//! A small pair of sample subsets is chosen from the available pools, a
//! scenario program over all subset pairs yields a nominal decision `u_nom`,
//! and the constraint values on the subset grid at `u_nom` (all `≤ 0`) form
//! the desired sample set. Subset weights are either uniform or fitted with
//! the reduced-set method against the full pools.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraint::{product_weights, ChanceConstraint, Sample};
use crate::embedding::WeightedSampleSet;
use crate::error::{Error, Result};
use crate::kernel::{median_pairwise_distance, KernelSpec};
use crate::objective::QuadraticObjective;
use crate::poly::Polynomial;
use crate::reduced_set::{default_ridge, random_subset, solve_weights};
use crate::scenario::{solve_affine, solve_scalar, HalfSpace, VIOLATION_TOL};

pub const DEFAULT_SUBSET_SIZE: usize = 20;
pub const DEFAULT_TRIALS: usize = 50;
pub const MAX_REDRAWS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct DesiredDistribution {
    /// `f(w̃1^i, w̃2^j, u_nom)` with weights `λ_i ξ_j`, row-major in `(i, j)`.
    pub set: WeightedSampleSet<f64>,
    pub u_nom: Vec<f64>,
    pub source_w1: WeightedSampleSet<Sample>,
    pub source_w2: WeightedSampleSet<Sample>,
}

impl DesiredDistribution {
    pub fn values(&self) -> &[f64] {
        self.set.values()
    }

    pub fn weights(&self) -> &[f64] {
        self.set.weights()
    }
}

/// A constraint together with the sample pools of its two uncertain
/// parameters.
#[derive(Clone, Copy)]
pub struct ScenarioTerm<'a> {
    pub constraint: &'a dyn ChanceConstraint,
    pub w1: &'a [Sample],
    pub w2: &'a [Sample],
}

/// Objective and decision bounds of the scenario program.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioCost {
    Scalar {
        lo: f64,
        hi: f64,
        cost: Polynomial,
    },
    Affine {
        lo: Vec<f64>,
        hi: Vec<f64>,
        cost: QuadraticObjective,
    },
}

impl ScenarioCost {
    pub fn dim(&self) -> usize {
        match self {
            Self::Scalar { .. } => 1,
            Self::Affine { lo, .. } => lo.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    Uniform,
    #[default]
    ReducedSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredConfig {
    pub n_w1: usize,
    pub n_w2: usize,
    pub trials: usize,
    pub weighting: Weighting,
    pub max_redraws: usize,
}

impl Default for DesiredConfig {
    fn default() -> Self {
        Self {
            n_w1: DEFAULT_SUBSET_SIZE,
            n_w2: DEFAULT_SUBSET_SIZE,
            trials: DEFAULT_TRIALS,
            weighting: Weighting::default(),
            max_redraws: MAX_REDRAWS,
        }
    }
}

/// Total positive violation `Σ max(0, f)` over every subset pair and term.
pub fn violation_score(terms: &[ScenarioTerm<'_>], idx1: &[usize], idx2: &[usize], probe: &[f64]) -> f64 {
    let mut score = 0.0;
    for t in terms {
        for &i in idx1 {
            for &j in idx2 {
                score += t.constraint.eval(&t.w1[i], &t.w2[j], probe).max(0.0);
            }
        }
    }
    score
}

fn check_pools(terms: &[ScenarioTerm<'_>]) -> Result<(usize, usize)> {
    let first = terms.first().ok_or(Error::Empty("scenario terms"))?;
    let sizes = (first.w1.len(), first.w2.len());
    if sizes.0 == 0 || sizes.1 == 0 {
        return Err(Error::Empty("sample pool"));
    }
    for t in terms {
        if (t.w1.len(), t.w2.len()) != sizes {
            return Err(Error::DimensionMismatch {
                expected: sizes.0 * sizes.1,
                got: t.w1.len() * t.w2.len(),
            });
        }
    }
    Ok(sizes)
}

/// Draws `trials` random subset pairs and keeps the one with the smallest
/// joint violation at `probe`. Ties go to the lexicographically smaller
/// index lists.
pub fn select_joint<R: Rng + ?Sized>(
    terms: &[ScenarioTerm<'_>],
    n_w1: usize,
    n_w2: usize,
    trials: usize,
    probe: &[f64],
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let (p1, p2) = check_pools(terms)?;
    if n_w1 == 0 || n_w2 == 0 || n_w1 > p1 || n_w2 > p2 {
        return Err(Error::InvalidInput(format!(
            "subset sizes ({n_w1}, {n_w2}) must lie in 1..=({p1}, {p2})"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    let candidates: Vec<(Vec<usize>, Vec<usize>)> = (0..trials)
        .map(|_| {
            let a = random_subset(rng, p1, n_w1);
            let b = random_subset(rng, p2, n_w2);
            (a, b)
        })
        .collect();
    let best = candidates
        .into_par_iter()
        .map(|(a, b)| (violation_score(terms, &a, &b, probe), a, b))
        .min_by(|x, y| {
            x.0.total_cmp(&y.0)
                .then_with(|| x.1.cmp(&y.1))
                .then_with(|| x.2.cmp(&y.2))
        })
        .expect("trials >= 1");
    Ok((best.1, best.2))
}

/// Single-constraint subset selection.
#[allow(clippy::too_many_arguments)]
pub fn select_scenario_sets<R: Rng + ?Sized>(
    constraint: &dyn ChanceConstraint,
    samples_w1: &[Sample],
    samples_w2: &[Sample],
    n_w1: usize,
    n_w2: usize,
    trials: usize,
    probe: &[f64],
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let term = ScenarioTerm {
        constraint,
        w1: samples_w1,
        w2: samples_w2,
    };
    select_joint(&[term], n_w1, n_w2, trials, probe, rng)
}

/// Scenario program over every `(i, j)` subset pair of every term.
pub fn solve_scenario(
    terms: &[ScenarioTerm<'_>],
    idx1: &[usize],
    idx2: &[usize],
    cost: &ScenarioCost,
) -> Result<Vec<f64>> {
    let mut fields = Vec::with_capacity(terms.len() * idx1.len() * idx2.len());
    for t in terms {
        if t.constraint.decision_dim() != cost.dim() {
            return Err(Error::DimensionMismatch {
                expected: cost.dim(),
                got: t.constraint.decision_dim(),
            });
        }
        for &i in idx1 {
            for &j in idx2 {
                fields.push(t.constraint.fields(&t.w1[i], &t.w2[j]));
            }
        }
    }
    match cost {
        ScenarioCost::Scalar { lo, hi, cost } => {
            solve_scalar(fields.iter().map(Vec::as_slice), *lo, *hi, cost).map(|u| vec![u])
        }
        ScenarioCost::Affine { lo, hi, cost } => {
            let rows: Vec<HalfSpace> = fields
                .into_iter()
                .map(|f| HalfSpace {
                    offset: f[0],
                    normal: f[1..].to_vec(),
                })
                .collect();
            solve_affine(&rows, lo, hi, cost)
        }
    }
}

/// Scenario solution with every pool collapsed to its mean.
pub fn mean_probe(terms: &[ScenarioTerm<'_>], cost: &ScenarioCost) -> Result<Vec<f64>> {
    let mean = |pool: &[Sample]| -> Sample {
        let n = pool.len() as f64;
        let dim = pool[0].len();
        (0..dim).map(|k| pool.iter().map(|s| s[k]).sum::<f64>() / n).collect()
    };
    check_pools(terms)?;
    let means: Vec<(Sample, Sample)> = terms.iter().map(|t| (mean(t.w1), mean(t.w2))).collect();
    let collapsed: Vec<ScenarioTerm<'_>> = terms
        .iter()
        .zip(&means)
        .map(|(t, (a, b))| ScenarioTerm {
            constraint: t.constraint,
            w1: std::slice::from_ref(a),
            w2: std::slice::from_ref(b),
        })
        .collect();
    solve_scenario(&collapsed, &[0], &[0], cost)
}

fn subset_weights(pool: &[Sample], idx: &[usize], weighting: Weighting) -> Result<WeightedSampleSet<Sample>> {
    let chosen: Vec<Sample> = idx.iter().map(|&i| pool[i].clone()).collect();
    match weighting {
        Weighting::Uniform => WeightedSampleSet::uniform(chosen),
        Weighting::ReducedSet => {
            let bw = median_pairwise_distance(pool);
            let spec = KernelSpec::rbf(if bw > 0.0 { bw } else { 1.0 });
            let ridge = default_ridge(&chosen, &spec)?;
            let fit = solve_weights(pool, &chosen, &spec, ridge)?;
            WeightedSampleSet::new(chosen, fit.weights)
        }
    }
}

/// Desired distribution of one term at a solved `u_nom`.
pub fn build_desired(
    term: &ScenarioTerm<'_>,
    idx1: &[usize],
    idx2: &[usize],
    u_nom: &[f64],
    weighting: Weighting,
) -> Result<DesiredDistribution> {
    if idx1.is_empty() || idx2.is_empty() {
        return Err(Error::Empty("scenario subset"));
    }
    let source_w1 = subset_weights(term.w1, idx1, weighting)?;
    let source_w2 = subset_weights(term.w2, idx2, weighting)?;
    let mut values = Vec::with_capacity(idx1.len() * idx2.len());
    for a in source_w1.values() {
        for b in source_w2.values() {
            let v = term.constraint.eval(a, b, u_nom);
            if !(v <= VIOLATION_TOL) {
                return Err(Error::InvalidInput(format!(
                    "u_nom violates a scenario constraint (f = {v:e})"
                )));
            }
            values.push(v);
        }
    }
    let weights = product_weights(source_w1.weights(), source_w2.weights());
    Ok(DesiredDistribution {
        set: WeightedSampleSet::new(values, weights)?,
        u_nom: u_nom.to_vec(),
        source_w1,
        source_w2,
    })
}

/// Selects subsets, solves the joint scenario program and builds one
/// desired distribution per term, all sharing `u_nom`. Infeasible draws are
/// retried up to `cfg.max_redraws` times.
pub fn construct_desired<R: Rng + ?Sized>(
    terms: &[ScenarioTerm<'_>],
    cost: &ScenarioCost,
    fallback_probe: &[f64],
    cfg: &DesiredConfig,
    rng: &mut R,
) -> Result<Vec<DesiredDistribution>> {
    let probe = mean_probe(terms, cost).unwrap_or_else(|_| fallback_probe.to_vec());
    let mut last = None;
    for _ in 0..=cfg.max_redraws {
        let (idx1, idx2) = select_joint(terms, cfg.n_w1, cfg.n_w2, cfg.trials, &probe, rng)?;
        match solve_scenario(terms, &idx1, &idx2, cost) {
            Ok(u_nom) => {
                return terms
                    .iter()
                    .map(|t| build_desired(t, &idx1, &idx2, &u_nom, cfg.weighting))
                    .collect();
            }
            Err(e @ Error::InfeasibleScenario(_)) => {
                log::debug!("scenario draw infeasible, redrawing: {e}");
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::InfeasibleScenario("no draws".into())))
}
