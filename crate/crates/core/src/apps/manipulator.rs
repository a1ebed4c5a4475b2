//! Torque-bounded task-space tracking for a planar two-link arm with noisy
//! joint-state estimates.
//!
//! The arm carries point masses `m1`, `m2` at the ends of links `l1`, `l2`.
//! At every control step the joint accelerations `q̈` are chosen to track a
//! commanded end-effector acceleration while keeping
//! `|M(q) q̈ + C(q, q̇) q̇ + G(q)| ≤ τ_max` per joint with high probability.
//! The uncertain parameters are `w1 = q` and `w2 = q̇`.

use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::moments::{FourMomentSampler, FourMomentSpec};
use crate::constraint::{evaluate_coefficient_matrices, AffineChanceConstraint, ChanceConstraint, Sample};
use crate::desired::{construct_desired, DesiredConfig, ScenarioCost, ScenarioTerm};
use crate::embedding::WeightedSampleSet;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::objective::{assemble_affine_general, QuadraticObjective};
use crate::solvers::{
    baseline_scenario, minimize_box_quadratic, projected_gradient_smooth, Bounds, SolverConfig, SolverReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmParams {
    pub l1: f64,
    pub l2: f64,
    pub m1: f64,
    pub m2: f64,
    pub gravity: f64,
    pub tau_max: f64,
    pub qdd_max: f64,
    pub kp: f64,
}

impl Default for ArmParams {
    fn default() -> Self {
        Self {
            l1: 1.0,
            l2: 1.0,
            m1: 1.0,
            m2: 1.0,
            gravity: 0.0,
            tau_max: 8.0,
            qdd_max: 10.0,
            kp: 25.0,
        }
    }
}

impl ArmParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.l1, self.l2, self.m1, self.m2, self.tau_max, self.qdd_max, self.kp];
        if positive.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::InvalidInput(
                "link lengths, masses, torque and acceleration bounds and kp must be positive".into(),
            ));
        }
        if !self.gravity.is_finite() {
            return Err(Error::InvalidInput("gravity must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsTerms {
    pub mass: Matrix2<f64>,
    /// `C(q, q̇) q̇ + G(q)`.
    pub bias: Vector2<f64>,
    pub jacobian: Matrix2<f64>,
    pub jdot_qd: Vector2<f64>,
}

pub fn forward_kinematics(q: &[f64], p: &ArmParams) -> [f64; 2] {
    let q12 = q[0] + q[1];
    [
        p.l1 * q[0].cos() + p.l2 * q12.cos(),
        p.l1 * q[0].sin() + p.l2 * q12.sin(),
    ]
}

pub fn mass_matrix(q: &[f64], p: &ArmParams) -> Matrix2<f64> {
    let c2 = q[1].cos();
    let m22 = p.m2 * p.l2 * p.l2;
    let m12 = m22 + p.m2 * p.l1 * p.l2 * c2;
    let m11 = (p.m1 + p.m2) * p.l1 * p.l1 + m22 + 2.0 * p.m2 * p.l1 * p.l2 * c2;
    Matrix2::new(m11, m12, m12, m22)
}

/// Coriolis/centrifugal plus gravity torques.
pub fn bias_torque(q: &[f64], qd: &[f64], p: &ArmParams) -> Vector2<f64> {
    let h = p.m2 * p.l1 * p.l2 * q[1].sin();
    let c1 = q[0].cos();
    let c12 = (q[0] + q[1]).cos();
    let g1 = (p.m1 + p.m2) * p.gravity * p.l1 * c1 + p.m2 * p.gravity * p.l2 * c12;
    let g2 = p.m2 * p.gravity * p.l2 * c12;
    Vector2::new(-h * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]) + g1, h * qd[0] * qd[0] + g2)
}

pub fn jacobian(q: &[f64], p: &ArmParams) -> Matrix2<f64> {
    let (s1, c1) = q[0].sin_cos();
    let (s12, c12) = (q[0] + q[1]).sin_cos();
    Matrix2::new(-p.l1 * s1 - p.l2 * s12, -p.l2 * s12, p.l1 * c1 + p.l2 * c12, p.l2 * c12)
}

pub fn jdot_qd(q: &[f64], qd: &[f64], p: &ArmParams) -> Vector2<f64> {
    let (s1, c1) = q[0].sin_cos();
    let (s12, c12) = (q[0] + q[1]).sin_cos();
    let w1 = qd[0] * qd[0];
    let w12 = (qd[0] + qd[1]).powi(2);
    Vector2::new(-p.l1 * c1 * w1 - p.l2 * c12 * w12, -p.l1 * s1 * w1 - p.l2 * s12 * w12)
}

pub fn dynamics_terms(q: &[f64], qd: &[f64], p: &ArmParams) -> DynamicsTerms {
    DynamicsTerms {
        mass: mass_matrix(q, p),
        bias: bias_torque(q, qd, p),
        jacobian: jacobian(q, p),
        jdot_qd: jdot_qd(q, qd, p),
    }
}

/// Joint torques `M q̈ + C q̇ + G`.
pub fn inverse_dynamics(q: &[f64], qd: &[f64], qdd: &[f64], p: &ArmParams) -> Vector2<f64> {
    mass_matrix(q, p) * Vector2::new(qdd[0], qdd[1]) + bias_torque(q, qd, p)
}

/// Four affine constraints `±τ_i − τ_max ≤ 0` in `q̈`, ordered
/// `(+τ1, −τ1, +τ2, −τ2)`.
pub fn torque_constraint_fields(p: &ArmParams) -> Vec<AffineChanceConstraint> {
    let p = *p;
    let mut out = Vec::with_capacity(4);
    for joint in 0..2 {
        for sign in [1.0, -1.0] {
            out.push(AffineChanceConstraint::new(2, move |q, qd| {
                let m = mass_matrix(q, &p);
                let b = bias_torque(q, qd, &p);
                vec![sign * b[joint] - p.tau_max, sign * m[(joint, 0)], sign * m[(joint, 1)]]
            }));
        }
    }
    out
}

/// Elbow-up (`q2 ≥ 0`) inverse kinematics.
pub fn inverse_kinematics(x: [f64; 2], p: &ArmParams) -> Result<[f64; 2]> {
    let r2 = x[0] * x[0] + x[1] * x[1];
    let c2 = (r2 - p.l1 * p.l1 - p.l2 * p.l2) / (2.0 * p.l1 * p.l2);
    if !(-1.0..=1.0).contains(&c2) {
        return Err(Error::InvalidInput(format!("target ({}, {}) out of reach", x[0], x[1])));
    }
    let q2 = c2.acos();
    let q1 = x[1].atan2(x[0]) - (p.l2 * q2.sin()).atan2(p.l1 + p.l2 * q2.cos());
    Ok([q1, q2])
}

/// Desired task-space position, velocity and acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskTarget {
    pub x: [f64; 2],
    pub xd: [f64; 2],
    pub xdd: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Reference {
    Circle {
        center: [f64; 2],
        radius: f64,
        omega: f64,
    },
    /// Rows `(t, x, y, ẋ, ẏ, ẍ, ÿ)`, linearly interpolated and held at the ends.
    Table {
        rows: Vec<[f64; 7]>,
    },
}

impl Reference {
    pub fn at(&self, t: f64) -> TaskTarget {
        match self {
            Self::Circle { center, radius, omega } => {
                let (s, c) = (omega * t).sin_cos();
                let (r, w) = (*radius, *omega);
                TaskTarget {
                    x: [center[0] + r * c, center[1] + r * s],
                    xd: [-r * w * s, r * w * c],
                    xdd: [-r * w * w * c, -r * w * w * s],
                }
            }
            Self::Table { rows } => {
                let pick = |row: &[f64; 7]| TaskTarget {
                    x: [row[1], row[2]],
                    xd: [row[3], row[4]],
                    xdd: [row[5], row[6]],
                };
                let k = rows.partition_point(|r| r[0] <= t);
                if k == 0 {
                    return pick(&rows[0]);
                }
                if k == rows.len() {
                    return pick(&rows[rows.len() - 1]);
                }
                let (a, b) = (&rows[k - 1], &rows[k]);
                let s = (t - a[0]) / (b[0] - a[0]);
                let mut row = [0.0; 7];
                for i in 0..7 {
                    row[i] = a[i] + s * (b[i] - a[i]);
                }
                pick(&row)
            }
        }
    }
}

/// Independent noise on joint angles and joint velocities (offsets).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointNoise {
    pub angle: FourMomentSpec,
    pub velocity: FourMomentSpec,
}

impl JointNoise {
    pub fn none() -> Self {
        Self {
            angle: FourMomentSpec::degenerate(0.0),
            velocity: FourMomentSpec::degenerate(0.0),
        }
    }
}

/// Samples of the estimated joint state.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmBelief {
    pub q: Vec<Sample>,
    pub qd: Vec<Sample>,
    /// Extra samples available to the desired-set construction only.
    pub q_extra: Vec<Sample>,
    pub qd_extra: Vec<Sample>,
}

impl ArmBelief {
    pub fn draw<R: Rng + ?Sized>(
        q: &[f64],
        qd: &[f64],
        noise: &JointNoise,
        n: usize,
        n_extra: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let a = FourMomentSampler::new(noise.angle)?;
        let v = FourMomentSampler::new(noise.velocity)?;
        let mut draw = |base: &[f64], s: &FourMomentSampler, k: usize| -> Vec<Sample> {
            (0..k)
                .map(|_| base.iter().map(|b| b + s.sample(rng)).collect())
                .collect()
        };
        let q_s = draw(q, &a, n);
        let qd_s = draw(qd, &v, n);
        let q_extra = draw(q, &a, n_extra);
        let qd_extra = draw(qd, &v, n_extra);
        Ok(Self {
            q: q_s,
            qd: qd_s,
            q_extra,
            qd_extra,
        })
    }

    pub fn mean_q(&self) -> [f64; 2] {
        mean2(&self.q)
    }

    pub fn mean_qd(&self) -> [f64; 2] {
        mean2(&self.qd)
    }
}

fn mean2(xs: &[Sample]) -> [f64; 2] {
    let n = xs.len() as f64;
    [
        xs.iter().map(|s| s[0]).sum::<f64>() / n,
        xs.iter().map(|s| s[1]).sum::<f64>() / n,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackingSolver {
    #[default]
    Rkhs,
    /// Hard torque constraints at every belief-sample pair.
    Scenario,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingConfig {
    pub solver: SolverConfig,
    pub kernel: KernelSpec,
    pub desired: DesiredConfig,
    pub method: TrackingSolver,
}

impl TrackingConfig {
    pub fn kernel_spec(&self) -> KernelSpec {
        KernelSpec {
            degree: self.solver.degree,
            ..self.kernel
        }
    }
}

/// Commanded task acceleration `ẍ_d + k_p (x_d − x) + 2√k_p (ẋ_d − ẋ)`.
pub fn commanded_acceleration(target: &TaskTarget, x: [f64; 2], xd: [f64; 2], kp: f64) -> [f64; 2] {
    let kd = 2.0 * kp.sqrt();
    [0, 1].map(|i| target.xdd[i] + kp * (target.x[i] - x[i]) + kd * (target.xd[i] - xd[i]))
}

/// `½‖J(q̄) q̈ + J̇q̇(q̄, q̄̇) − ẍ_cmd‖²` at the belief mean.
pub fn tracking_cost(belief: &ArmBelief, target: &TaskTarget, p: &ArmParams) -> Result<QuadraticObjective> {
    let (q, qd) = (belief.mean_q(), belief.mean_qd());
    let terms = dynamics_terms(&q, &qd, p);
    let x = forward_kinematics(&q, p);
    let v = terms.jacobian * Vector2::new(qd[0], qd[1]);
    let cmd = commanded_acceleration(target, x, [v[0], v[1]], p.kp);
    let a = DMatrix::from_fn(2, 2, |i, j| terms.jacobian[(i, j)]);
    QuadraticObjective::least_squares(&a, &[cmd[0] - terms.jdot_qd[0], cmd[1] - terms.jdot_qd[1]])
}

/// One receding-horizon step. An infeasible scenario program yields the
/// safety fallback `q̈ = 0` with `report.fallback` set.
pub fn tracking_step<R: Rng + ?Sized>(
    belief: &ArmBelief,
    target: &TaskTarget,
    params: &ArmParams,
    cfg: &TrackingConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, SolverReport)> {
    let start = std::time::Instant::now();
    params.validate()?;
    if belief.q.is_empty() || belief.q.len() != belief.qd.len() {
        return Err(Error::Empty("arm belief"));
    }
    let (lo, hi) = (vec![-params.qdd_max; 2], vec![params.qdd_max; 2]);
    let mut solver = cfg.solver.clone();
    solver.bounds = Bounds::Box {
        lo: lo.clone(),
        hi: hi.clone(),
    };
    let cost = tracking_cost(belief, target, params)?;
    let constraints = torque_constraint_fields(params);
    let q_pool: Vec<Sample> = belief.q.iter().chain(&belief.q_extra).cloned().collect();
    let qd_pool: Vec<Sample> = belief.qd.iter().chain(&belief.qd_extra).cloned().collect();
    let terms: Vec<ScenarioTerm<'_>> = constraints
        .iter()
        .map(|c| ScenarioTerm {
            constraint: c as &dyn ChanceConstraint,
            w1: &q_pool,
            w2: &qd_pool,
        })
        .collect();
    let scenario = ScenarioCost::Affine {
        lo: lo.clone(),
        hi: hi.clone(),
        cost: cost.clone(),
    };
    let fallback = |cost_value: f64| {
        let zero = vec![0.0; 2];
        let mut report = SolverReport::new(zero.clone(), solver.rho1, solver.rho2, f64::NAN, cost_value);
        report.objective_value = f64::NAN;
        report.fallback = true;
        report.wall_time = start.elapsed();
        (zero, report)
    };
    if cfg.method == TrackingSolver::Scenario {
        let full: Vec<ScenarioTerm<'_>> = constraints
            .iter()
            .map(|c| ScenarioTerm {
                constraint: c as &dyn ChanceConstraint,
                w1: &belief.q,
                w2: &belief.qd,
            })
            .collect();
        return match baseline_scenario(&full, &scenario) {
            Ok(mut r) => {
                r.samples_used.n = belief.q.len();
                r.wall_time = start.elapsed();
                Ok((r.u_star.clone(), r))
            }
            Err(Error::InfeasibleScenario(_)) => Ok(fallback(cost.value(&[0.0, 0.0]))),
            Err(e) => Err(e),
        };
    }
    let desired = match construct_desired(&terms, &scenario, &[0.0, 0.0], &cfg.desired, rng) {
        Ok(d) => d,
        Err(Error::InfeasibleScenario(msg)) => {
            log::debug!("torque scenario infeasible ({msg}); holding q̈ = 0");
            return Ok(fallback(cost.value(&[0.0, 0.0])));
        }
        Err(e) => return Err(e),
    };
    let q_set = WeightedSampleSet::uniform(belief.q.clone())?;
    let qd_set = WeightedSampleSet::uniform(belief.qd.clone())?;
    let grids: Vec<_> = constraints
        .iter()
        .map(|c| evaluate_coefficient_matrices(c, &q_set, &qd_set))
        .collect();
    let spec = cfg.kernel_spec();
    let mmd = assemble_affine_general(&grids, &desired, &spec)?;
    let mut report = if spec.degree == 1 {
        minimize_box_quadratic(&mmd.to_quadratic()?, &cost, &solver)?
    } else {
        let (r1, r2) = (solver.rho1, solver.rho2);
        let f = |u: &[f64]| {
            let (v, g) = mmd.value_and_gradient(u);
            let gj = cost.gradient(u);
            (
                r1 * v + r2 * cost.value(u),
                g.iter().zip(&gj).map(|(a, b)| r1 * a + r2 * b).collect(),
            )
        };
        let (u, converged) = projected_gradient_smooth(f, &lo, &hi, &desired[0].u_nom, 20_000);
        let mut r = SolverReport::new(u.clone(), r1, r2, mmd.value(&u), cost.value(&u));
        r.converged = converged;
        r
    };
    report.samples_used.n = belief.q.len();
    report.samples_used.n_w1 = cfg.desired.n_w1;
    report.samples_used.n_w2 = cfg.desired.n_w2;
    report.wall_time = start.elapsed();
    Ok((report.u_star.clone(), report))
}

/// Fraction of `(q, q̇)` pairs at which both joint torques stay within
/// `τ_max`, and the torque fan itself.
pub fn torque_satisfaction(qdd: &[f64], q: &[Sample], qd: &[Sample], p: &ArmParams) -> (f64, Vec<[f64; 2]>) {
    let fan: Vec<[f64; 2]> = q
        .iter()
        .zip(qd)
        .map(|(a, b)| {
            let t = inverse_dynamics(a, b, qdd, p);
            [t[0], t[1]]
        })
        .collect();
    let ok = fan
        .iter()
        .filter(|t| t[0].abs() <= p.tau_max && t[1].abs() <= p.tau_max)
        .count();
    (ok as f64 / fan.len().max(1) as f64, fan)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingRecord {
    pub time: f64,
    pub q: [f64; 2],
    pub qd: [f64; 2],
    pub qdd: [f64; 2],
    pub x: [f64; 2],
    pub x_ref: [f64; 2],
    pub deviation: f64,
    pub mean_torque: [f64; 2],
    /// Held-out torque-bound satisfaction at the chosen `q̈`.
    pub eta: f64,
    pub cost: f64,
    pub mmd: f64,
    pub objective: f64,
    pub fallback: bool,
    pub torque_fan: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingRun {
    pub steps: usize,
    pub dt: f64,
    pub n: usize,
    pub n_extra: usize,
    /// Held-out belief samples per step for the satisfaction estimate.
    pub fan_size: usize,
}

/// Receding-horizon tracking from the reference's initial pose.
pub fn run_tracking<R: Rng + ?Sized>(
    reference: &Reference,
    params: &ArmParams,
    noise: &JointNoise,
    cfg: &TrackingConfig,
    run: &TrackingRun,
    rng: &mut R,
) -> Result<Vec<TrackingRecord>> {
    params.validate()?;
    let start = reference.at(0.0);
    let mut q = inverse_kinematics(start.x, params)?;
    let jac = jacobian(&q, params);
    let v0 = jac
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("initial pose is singular".into()))?
        * Vector2::new(start.xd[0], start.xd[1]);
    let mut qd = [v0[0], v0[1]];
    let mut out = Vec::with_capacity(run.steps);
    for step in 0..run.steps {
        let t = step as f64 * run.dt;
        let target = reference.at(t);
        let belief = ArmBelief::draw(&q, &qd, noise, run.n, run.n_extra, rng)?;
        let (qdd, report) = match tracking_step(&belief, &target, params, cfg, rng) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("step {step}: {e}; holding q̈ = 0");
                let zero = vec![0.0; 2];
                let mut r = SolverReport::new(zero.clone(), cfg.solver.rho1, cfg.solver.rho2, f64::NAN, f64::NAN);
                r.fallback = true;
                (zero, r)
            }
        };
        let held = ArmBelief::draw(&q, &qd, noise, run.fan_size, 0, rng)?;
        let (eta, fan) = torque_satisfaction(&qdd, &held.q, &held.qd, params);
        let mean_torque = inverse_dynamics(&q, &qd, &qdd, params);
        let x = forward_kinematics(&q, params);
        let deviation = ((x[0] - target.x[0]).powi(2) + (x[1] - target.x[1]).powi(2)).sqrt();
        out.push(TrackingRecord {
            time: t,
            q,
            qd,
            qdd: [qdd[0], qdd[1]],
            x,
            x_ref: target.x,
            deviation,
            mean_torque: [mean_torque[0], mean_torque[1]],
            eta,
            cost: report.cost_value,
            mmd: report.mmd_value,
            objective: report.objective_value,
            fallback: report.fallback,
            torque_fan: fan,
        });
        // Semi-implicit Euler under perfect actuation.
        for i in 0..2 {
            qd[i] += qdd[i] * run.dt;
            q[i] += qd[i] * run.dt;
        }
    }
    Ok(out)
}
