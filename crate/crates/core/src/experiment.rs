//! Seeded experiment orchestration: one solve per seed, held-out validation,
//! report and summary CSVs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::apps::collision::{
    avoid_step, collision_constraint, velocity_cost, AvoidConfig, AvoidSamples, CollisionScene,
};
use crate::apps::manipulator::{
    run_tracking, JointNoise, Reference, TrackingConfig, TrackingRecord, TrackingRun, TrackingSolver,
};
use crate::constraint::{evaluate_coefficient_matrices, ChanceConstraint, PolynomialChanceConstraint, Sample};
use crate::desired::{DesiredConfig, ScenarioCost, ScenarioTerm};
use crate::embedding::WeightedSampleSet;
use crate::error::{Error, Result};
use crate::io::config::{Application, CollisionSection, ExperimentConfig, SolverKind, TrackingSection};
use crate::io::fmt_f64;
use crate::io::report::{write_report, write_summary, ReportRow, SummaryRow};
use crate::io::samples::{ingest_samples, parse_reference, write_distribution_snapshot};
use crate::kernel::KernelSpec;
use crate::objective::embed_at;
use crate::solvers::{
    baseline_mean_var, baseline_saa, baseline_scenario, cantelli_epsilon, validate_joint, Bounds, SolverConfig,
    SolverReport,
};

/// Everything one seed produces.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub row: ReportRow,
    /// `(embedded at u*, desired)` per obstacle, for RKHS collision runs.
    pub snapshots: Vec<(WeightedSampleSet<f64>, WeightedSampleSet<f64>)>,
    pub history: Option<Vec<TrackingRecord>>,
}

pub fn solver_config(cfg: &ExperimentConfig, seed: u64) -> SolverConfig {
    SolverConfig {
        rho1: cfg.weights.rho1,
        rho2: cfg.weights.rho2,
        degree: cfg.kernel.degree,
        target_eta: cfg.solve.target_eta,
        bounds: Bounds::HalfLine { lo: cfg.solve.lower },
        horizon: cfg.solve.horizon,
        grid_resolution: cfg.solve.grid_resolution,
        seed,
    }
}

fn kernel(cfg: &ExperimentConfig) -> KernelSpec {
    KernelSpec::polynomial(cfg.kernel.degree)
        .with_offset(cfg.kernel.offset)
        .with_scale(cfg.kernel.scale)
}

fn desired_config(cfg: &ExperimentConfig) -> DesiredConfig {
    DesiredConfig {
        n_w1: cfg.budget.n_w1,
        n_w2: cfg.budget.n_w2,
        trials: cfg.budget.trials,
        weighting: cfg.budget.weighting,
        ..DesiredConfig::default()
    }
}

/// RNG for the solve; the held-out draw uses an independent stream.
pub fn seed_rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let solve = ChaCha8Rng::seed_from_u64(seed);
    let mut holdout = ChaCha8Rng::seed_from_u64(seed);
    holdout.set_stream(1);
    (solve, holdout)
}

fn scene(c: &CollisionSection) -> CollisionScene {
    CollisionScene {
        robot: c.robot,
        obstacles: c.obstacles.clone(),
        robot_noise: c.robot_noise.to_noise(),
        obstacle_noise: c.obstacle_noise.to_noise(),
    }
}

/// First `n` rows feed the embedding, the rest the desired-set pool.
fn split_file(path: &Path, n: usize) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let f = ingest_samples(path)?;
    let mut all = f.set.into_parts().0;
    if all.len() < n {
        return Err(Error::InvalidInput(format!(
            "{}: {} rows, need at least n = {n}",
            path.display(),
            all.len()
        )));
    }
    let extra = all.split_off(n);
    Ok((all, extra))
}

fn collision_samples(cfg: &ExperimentConfig, c: &CollisionSection, rng: &mut ChaCha8Rng) -> Result<AvoidSamples> {
    let b = &cfg.budget;
    let mut s = scene(c).draw(b.n, b.n_w1, b.n_w2, rng)?;
    if let Some(p) = &c.robot_samples {
        (s.robot, s.robot_extra) = split_file(p, b.n)?;
    }
    if let Some(ps) = &c.obstacle_samples {
        for (k, p) in ps.iter().enumerate() {
            (s.obstacles[k], s.obstacles_extra[k]) = split_file(p, b.n)?;
        }
    }
    Ok(s)
}

fn millis(r: &SolverReport) -> f64 {
    r.wall_time.as_secs_f64() * 1e3
}

/// Row for a baseline with no feasible decision: NaN decision and cost, no
/// satisfaction estimate.
fn infeasible_row(cfg: &ExperimentConfig, seed: u64) -> ReportRow {
    let k = cfg.collision.as_ref().map_or(0, |c| c.obstacles.len());
    ReportRow {
        seed,
        solver: cfg.solver.name().into(),
        degree: cfg.kernel.degree,
        rho1: 0.0,
        rho2: 1.0,
        u_star: vec![f64::NAN],
        cost: f64::NAN,
        mmd: f64::NAN,
        objective: f64::NAN,
        empirical_eta: None,
        n: cfg.budget.n,
        n_w1: cfg.budget.n_w1,
        n_w2: cfg.budget.n_w2,
        n_holdout: cfg.budget.n_holdout,
        wall_ms: None,
        constraint_eta: if cfg.application == Application::CollisionMulti {
            vec![f64::NAN; k]
        } else {
            Vec::new()
        },
    }
}

fn run_collision(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    let c = cfg
        .collision
        .as_ref()
        .ok_or_else(|| Error::Config("collision: section required".into()))?;
    let (mut rng, mut hrng) = seed_rngs(seed);
    let samples = collision_samples(cfg, c, &mut rng)?;
    let solver = solver_config(cfg, seed);
    let constraints: Vec<PolynomialChanceConstraint> = samples.radii.iter().map(|r| collision_constraint(*r)).collect();
    let mut snapshots = Vec::new();

    let report = if cfg.solver == SolverKind::Rkhs {
        let avoid = AvoidConfig {
            solver: solver.clone(),
            kernel: kernel(cfg),
            desired: desired_config(cfg),
            path: cfg.kernel.path,
        };
        let out = avoid_step(&samples, &avoid, &mut rng)?;
        if cfg.snapshots {
            let robot = WeightedSampleSet::uniform(samples.robot.clone())?;
            for ((con, obs), des) in out.constraints.iter().zip(&samples.obstacles).zip(&out.desired) {
                let cm = evaluate_coefficient_matrices(con, &robot, &WeightedSampleSet::uniform(obs.clone())?);
                snapshots.push((embed_at(&cm, out.report.u_star[0])?, des.set.clone()));
            }
        }
        out.report
    } else {
        let m = cfg.baseline.scenario_n.unwrap_or(cfg.budget.n);
        let take = |v: &[Sample]| v.iter().take(m).cloned().collect::<Vec<_>>();
        let robot = if cfg.solver == SolverKind::Scenario {
            take(&samples.robot)
        } else {
            samples.robot.clone()
        };
        let obstacles: Vec<Vec<Sample>> = if cfg.solver == SolverKind::Scenario {
            samples.obstacles.iter().map(|o| take(o)).collect()
        } else {
            samples.obstacles.clone()
        };
        let terms: Vec<ScenarioTerm<'_>> = constraints
            .iter()
            .zip(&obstacles)
            .map(|(con, w2)| ScenarioTerm {
                constraint: con as &dyn ChanceConstraint,
                w1: &robot,
                w2,
            })
            .collect();
        let (lo, hi) = solver.bounds.scalar_interval(solver.horizon)?;
        let start = std::time::Instant::now();
        let r = match cfg.solver {
            SolverKind::Scenario => baseline_scenario(
                &terms,
                &ScenarioCost::Scalar {
                    lo,
                    hi,
                    cost: velocity_cost(),
                },
            ),
            SolverKind::Saa => baseline_saa(
                &terms,
                &velocity_cost(),
                cfg.baseline.saa_gamma.unwrap_or(cfg.solve.target_eta),
                &solver,
            ),
            SolverKind::Meanvar => {
                let eps = cfg
                    .baseline
                    .epsilon
                    .unwrap_or_else(|| cantelli_epsilon(cfg.solve.target_eta));
                baseline_mean_var(&terms, eps, &velocity_cost(), &solver)
            }
            SolverKind::Rkhs => unreachable!(),
        };
        let mut r = match r {
            Ok(r) => r,
            Err(e @ (Error::Infeasible(_) | Error::InfeasibleScenario(_))) => {
                log::warn!("seed {seed}: {} baseline: {e}", cfg.solver.name());
                return Ok(SeedOutcome {
                    row: infeasible_row(cfg, seed),
                    snapshots,
                    history: None,
                });
            }
            Err(e) => return Err(e),
        };
        r.wall_time = start.elapsed();
        r
    };

    let (h_robot, h_obs) = scene(c).holdout(cfg.budget.n_holdout, &mut hrng)?;
    let refs: Vec<&dyn ChanceConstraint> = constraints.iter().map(|x| x as &dyn ChanceConstraint).collect();
    let pools: Vec<&[Sample]> = h_obs.iter().map(Vec::as_slice).collect();
    let eta = validate_joint(&refs, &report.u_star, &h_robot, &pools, cfg.budget.pairing)?;
    let per = if cfg.application == Application::CollisionMulti {
        refs.iter()
            .zip(&pools)
            .map(|(con, w2)| validate_joint(&[*con], &report.u_star, &h_robot, &[*w2], cfg.budget.pairing))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let row = ReportRow {
        seed,
        solver: cfg.solver.name().into(),
        degree: cfg.kernel.degree,
        rho1: report.rho1,
        rho2: report.rho2,
        u_star: report.u_star.clone(),
        cost: report.cost_value,
        mmd: report.mmd_value,
        objective: report.objective_value,
        empirical_eta: Some(eta),
        n: cfg.budget.n,
        n_w1: cfg.budget.n_w1,
        n_w2: cfg.budget.n_w2,
        n_holdout: cfg.budget.n_holdout,
        wall_ms: cfg.timing.then(|| millis(&report)),
        constraint_eta: per,
    };
    Ok(SeedOutcome {
        row,
        snapshots,
        history: None,
    })
}

pub fn reference(t: &TrackingSection) -> Result<Reference> {
    match (&t.reference, &t.reference_file) {
        (Some(r), _) => Ok(r.clone()),
        (None, Some(p)) => Ok(Reference::Table {
            rows: parse_reference(File::open(p)?)?,
        }),
        (None, None) => Err(Error::Config("tracking: no reference".into())),
    }
}

fn finite_mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = xs
        .filter(|x| x.is_finite())
        .fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    if k == 0 {
        f64::NAN
    } else {
        s / k as f64
    }
}

fn run_arm(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    let t = cfg
        .tracking
        .as_ref()
        .ok_or_else(|| Error::Config("tracking: section required".into()))?;
    let (mut rng, _) = seed_rngs(seed);
    let tc = TrackingConfig {
        solver: solver_config(cfg, seed),
        kernel: kernel(cfg),
        desired: desired_config(cfg),
        method: match cfg.solver {
            SolverKind::Scenario => TrackingSolver::Scenario,
            _ => TrackingSolver::Rkhs,
        },
    };
    let run = TrackingRun {
        steps: t.steps,
        dt: t.dt,
        n: cfg.budget.n,
        n_extra: cfg.budget.n_w1.max(cfg.budget.n_w2),
        fan_size: t.fan_size,
    };
    let noise = JointNoise {
        angle: t.angle_noise,
        velocity: t.velocity_noise,
    };
    let start = std::time::Instant::now();
    let hist = run_tracking(&reference(t)?, &t.arm, &noise, &tc, &run, &mut rng)?;
    let wall = start.elapsed().as_secs_f64() * 1e3;
    let last = hist.last().map(|r| r.qdd.to_vec()).unwrap_or_else(|| vec![0.0; 2]);
    let row = ReportRow {
        seed,
        solver: cfg.solver.name().into(),
        degree: cfg.kernel.degree,
        rho1: cfg.weights.rho1,
        rho2: cfg.weights.rho2,
        u_star: last,
        cost: finite_mean(hist.iter().map(|r| r.cost)),
        mmd: finite_mean(hist.iter().map(|r| r.mmd)),
        objective: finite_mean(hist.iter().map(|r| r.objective)),
        empirical_eta: Some(finite_mean(hist.iter().map(|r| r.eta))),
        n: cfg.budget.n,
        n_w1: cfg.budget.n_w1,
        n_w2: cfg.budget.n_w2,
        n_holdout: t.fan_size,
        wall_ms: cfg.timing.then_some(wall),
        constraint_eta: Vec::new(),
    };
    Ok(SeedOutcome {
        row,
        snapshots: Vec::new(),
        history: Some(hist),
    })
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    match cfg.application {
        Application::CollisionSingle | Application::CollisionMulti => run_collision(cfg, seed),
        Application::Tracking => run_arm(cfg, seed),
    }
}

/// All seeds of `cfg`, in seed-list order.
pub fn run_seeds(cfg: &ExperimentConfig) -> Result<Vec<SeedOutcome>> {
    cfg.seeds.par_iter().map(|s| run_seed(cfg, *s)).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_history(path: &Path, hist: &[TrackingRecord]) -> Result<()> {
    let header =
        "time,q1,q2,q1dot,q2dot,q1ddot,q2ddot,x,y,x_ref,y_ref,deviation,tau1,tau2,eta,J,mmd,objective,fallback";
    let mut out = create(path)?;
    writeln!(out, "# rkhs-cc tracking history v1: {header}")?;
    writeln!(out, "{header}")?;
    for r in hist {
        let nums = [
            r.time,
            r.q[0],
            r.q[1],
            r.qd[0],
            r.qd[1],
            r.qdd[0],
            r.qdd[1],
            r.x[0],
            r.x[1],
            r.x_ref[0],
            r.x_ref[1],
            r.deviation,
            r.mean_torque[0],
            r.mean_torque[1],
            r.eta,
            r.cost,
            r.mmd,
            r.objective,
        ];
        let cells: Vec<String> = nums.iter().map(|x| fmt_f64(*x)).collect();
        writeln!(out, "{},{}", cells.join(","), r.fallback as u8)?;
    }
    out.flush()?;
    Ok(())
}

fn write_fan(path: &Path, hist: &[TrackingRecord]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "# rkhs-cc torque fan v1: step,tau1,tau2")?;
    writeln!(out, "step,tau1,tau2")?;
    for (k, r) in hist.iter().enumerate() {
        for t in &r.torque_fan {
            writeln!(out, "{k},{},{}", fmt_f64(t[0]), fmt_f64(t[1]))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes per-seed side outputs (snapshots, histories) into `dir`.
fn write_side_outputs(cfg: &ExperimentConfig, dir: &Path, prefix: &str, outcomes: &[SeedOutcome]) -> Result<()> {
    for o in outcomes {
        let seed = o.row.seed;
        for (k, (emb, des)) in o.snapshots.iter().enumerate() {
            let p = dir.join(format!("{prefix}snapshot_seed{seed}_c{}.csv", k + 1));
            write_distribution_snapshot(create(&p)?, emb, des, true)?;
        }
        if let Some(h) = &o.history {
            write_history(&dir.join(format!("{prefix}history_seed{seed}.csv")), h)?;
            if cfg.tracking.as_ref().is_some_and(|t| t.write_fan) {
                write_fan(&dir.join(format!("{prefix}fan_seed{seed}.csv")), h)?;
            }
        }
    }
    Ok(())
}

/// Runs every seed and writes `report.csv`, `summary.csv` and side outputs
/// under `dir`.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<(Vec<ReportRow>, SummaryRow)> {
    std::fs::create_dir_all(dir)?;
    let outcomes = run_seeds(cfg)?;
    let rows: Vec<ReportRow> = outcomes.iter().map(|o| o.row.clone()).collect();
    let summary = SummaryRow::from_rows(cfg.solver.name(), &rows).ok_or(Error::Empty("seeds"))?;
    write_report(create(&dir.join("report.csv"))?, &rows)?;
    write_summary(create(&dir.join("summary.csv"))?, std::slice::from_ref(&summary))?;
    write_side_outputs(cfg, dir, "", &outcomes)?;
    Ok((rows, summary))
}

/// One experiment per `key=value`; all rows go to one report and one summary
/// row per value.
pub fn run_sweep(cfg: &ExperimentConfig, key: &str, values: &[String], dir: &Path) -> Result<Vec<SummaryRow>> {
    if values.is_empty() {
        return Err(Error::Config(format!("{key}: no sweep values")));
    }
    std::fs::create_dir_all(dir)?;
    let configs = values
        .iter()
        .map(|v| cfg.with_override(key, v))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (v, c) in values.iter().zip(&configs) {
        let outcomes = run_seeds(c)?;
        let r: Vec<ReportRow> = outcomes.iter().map(|o| o.row.clone()).collect();
        let label = format!("{key}={v}");
        summaries.push(SummaryRow::from_rows(&label, &r).ok_or(Error::Empty("seeds"))?);
        write_side_outputs(c, dir, &format!("{key}{v}_"), &outcomes)?;
        rows.extend(r);
    }
    write_report(create(&dir.join("report.csv"))?, &rows)?;
    write_summary(create(&dir.join("summary.csv"))?, &summaries)?;
    Ok(summaries)
}
