//! Velocity-scaling collision avoidance.
//!
//! The robot keeps its path and picks a scale `u ≥ 0` for its current
//! velocity. With `r = p − p_o` and relative velocity `u·v − v_o`, the
//! collision-cone constraint with the denominator cleared reads
//!
//! ```text
//! f(u) = (r·(u v − v_o))² − (‖r‖² − R²)·‖u v − v_o‖² ≤ 0,
//! ```
//!
//! a quadratic in `u`. Robot states are `w1 = [x, y, ẋ, ẏ]`, obstacle states
//! `w2 = [x_o, y_o, ẋ_o, ẏ_o]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::moments::{FourMomentSampler, FourMomentSpec};
use crate::constraint::{evaluate_coefficient_matrices, ChanceConstraint, PolynomialChanceConstraint, Sample};
use crate::desired::{construct_desired, DesiredConfig, DesiredDistribution, ScenarioCost, ScenarioTerm};
use crate::embedding::WeightedSampleSet;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::objective::{assemble_univariate, EmbeddingPath, UnivariatePolyObjective};
use crate::poly::Polynomial;
use crate::solvers::{minimize_objective, validate_joint, Pairing, SolverConfig, SolverReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub radius: f64,
}

impl AgentState {
    pub fn new(position: [f64; 2], velocity: [f64; 2], radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidInput(format!("radius must be > 0, got {radius}")));
        }
        Ok(Self {
            position,
            velocity,
            radius,
        })
    }

    pub fn sample(&self) -> Sample {
        vec![self.position[0], self.position[1], self.velocity[0], self.velocity[1]]
    }
}

/// `[h0, h1, h2]` of the cleared collision-cone constraint for state
/// vectors `[x, y, ẋ, ẏ]` and combined radius `r_sum`.
pub fn collision_fields(w1: &[f64], w2: &[f64], r_sum: f64) -> [f64; 3] {
    let r = [w1[0] - w2[0], w1[1] - w2[1]];
    let v = [w1[2], w1[3]];
    let vo = [w2[2], w2[3]];
    let a = r[0] * v[0] + r[1] * v[1];
    let b = r[0] * vo[0] + r[1] * vo[1];
    let c = v[0] * v[0] + v[1] * v[1];
    let e = v[0] * vo[0] + v[1] * vo[1];
    let g = vo[0] * vo[0] + vo[1] * vo[1];
    let rho = r[0] * r[0] + r[1] * r[1] - r_sum * r_sum;
    [b * b - rho * g, -2.0 * a * b + 2.0 * rho * e, a * a - rho * c]
}

pub fn collision_coefficients(robot: &AgentState, obstacle: &AgentState) -> [f64; 3] {
    collision_fields(&robot.sample(), &obstacle.sample(), robot.radius + obstacle.radius)
}

/// `(r·v_rel)²/‖v_rel‖² − ‖r‖² + R²`, the uncleared form.
pub fn collision_cone_raw(w1: &[f64], w2: &[f64], r_sum: f64, u: f64) -> f64 {
    let r = [w1[0] - w2[0], w1[1] - w2[1]];
    let v = [u * w1[2] - w2[2], u * w1[3] - w2[3]];
    let dot = r[0] * v[0] + r[1] * v[1];
    dot * dot / (v[0] * v[0] + v[1] * v[1]) - (r[0] * r[0] + r[1] * r[1]) + r_sum * r_sum
}

pub fn collision_constraint(r_sum: f64) -> PolynomialChanceConstraint {
    PolynomialChanceConstraint::new(2, move |w1, w2| collision_fields(w1, w2, r_sum).to_vec())
}

/// `J(u) = (u − 1)²`.
pub fn velocity_cost() -> Polynomial {
    Polynomial::squared_deviation(1.0)
}

/// Independent four-moment noise on each state coordinate, added to a
/// nominal state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateNoise {
    /// Per coordinate `[x, y, ẋ, ẏ]`; means are offsets.
    pub coordinates: [FourMomentSpec; 4],
}

impl StateNoise {
    pub fn none() -> Self {
        Self {
            coordinates: [FourMomentSpec::degenerate(0.0); 4],
        }
    }

    /// Same shape on every coordinate with separate position and velocity
    /// standard deviations.
    pub fn shaped(pos_std: f64, vel_std: f64, skewness: f64, kurtosis: f64) -> Self {
        let spec = |std: f64| FourMomentSpec {
            mean: 0.0,
            variance: std * std,
            skewness,
            kurtosis,
        };
        Self {
            coordinates: [spec(pos_std), spec(pos_std), spec(vel_std), spec(vel_std)],
        }
    }

    pub fn sampler(&self) -> Result<StateSampler> {
        let s = self.coordinates.map(FourMomentSampler::new);
        let mut out = Vec::with_capacity(4);
        for x in s {
            out.push(x?);
        }
        Ok(StateSampler {
            coordinates: [out[0], out[1], out[2], out[3]],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSampler {
    coordinates: [FourMomentSampler; 4],
}

impl StateSampler {
    pub fn draw<R: Rng + ?Sized>(&self, nominal: &AgentState, n: usize, rng: &mut R) -> Vec<Sample> {
        let base = nominal.sample();
        (0..n)
            .map(|_| {
                base.iter()
                    .zip(&self.coordinates)
                    .map(|(b, c)| b + c.sample(rng))
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvoidConfig {
    pub solver: SolverConfig,
    /// Polynomial kernel; its degree is taken from `solver.degree`.
    pub kernel: KernelSpec,
    pub desired: DesiredConfig,
    pub path: EmbeddingPath,
}

impl AvoidConfig {
    pub fn kernel_spec(&self) -> KernelSpec {
        KernelSpec {
            degree: self.solver.degree,
            ..self.kernel
        }
    }
}

/// Belief samples for one decision step.
#[derive(Debug, Clone, PartialEq)]
pub struct AvoidSamples {
    /// Robot samples used for the embedding.
    pub robot: Vec<Sample>,
    /// One embedding sample set per obstacle.
    pub obstacles: Vec<Vec<Sample>>,
    /// Additional samples available only to the desired-set construction.
    pub robot_extra: Vec<Sample>,
    pub obstacles_extra: Vec<Vec<Sample>>,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AvoidOutcome {
    pub report: SolverReport,
    pub desired: Vec<DesiredDistribution>,
    pub objectives: Vec<UnivariatePolyObjective>,
    pub constraints: Vec<PolynomialChanceConstraint>,
}

/// One velocity-scaling decision against every obstacle.
pub fn avoid_step<R: Rng + ?Sized>(samples: &AvoidSamples, cfg: &AvoidConfig, rng: &mut R) -> Result<AvoidOutcome> {
    let start = std::time::Instant::now();
    let k = samples.obstacles.len();
    if k == 0 || samples.obstacles_extra.len() != k || samples.radii.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: samples.radii.len().min(samples.obstacles_extra.len()),
        });
    }
    let (lo, hi) = cfg.solver.bounds.scalar_interval(cfg.solver.horizon)?;
    let spec = cfg.kernel_spec();
    let constraints: Vec<PolynomialChanceConstraint> = samples.radii.iter().map(|r| collision_constraint(*r)).collect();

    let pool = |emb: &[Sample], extra: &[Sample]| -> Vec<Sample> { emb.iter().chain(extra).cloned().collect() };
    let robot_pool = pool(&samples.robot, &samples.robot_extra);
    let obstacle_pools: Vec<Vec<Sample>> = samples
        .obstacles
        .iter()
        .zip(&samples.obstacles_extra)
        .map(|(a, b)| pool(a, b))
        .collect();
    let terms: Vec<ScenarioTerm<'_>> = constraints
        .iter()
        .zip(&obstacle_pools)
        .map(|(c, w2)| ScenarioTerm {
            constraint: c as &dyn ChanceConstraint,
            w1: &robot_pool,
            w2,
        })
        .collect();
    let cost = ScenarioCost::Scalar {
        lo,
        hi,
        cost: velocity_cost(),
    };
    let desired = construct_desired(&terms, &cost, &[lo], &cfg.desired, rng)?;

    let robot_set = WeightedSampleSet::uniform(samples.robot.clone())?;
    let objectives = constraints
        .iter()
        .zip(&samples.obstacles)
        .zip(&desired)
        .map(|((c, obs), des)| {
            let obs_set = WeightedSampleSet::uniform(obs.clone())?;
            let cm = evaluate_coefficient_matrices(c, &robot_set, &obs_set);
            assemble_univariate(&cm, des, &spec, cfg.path)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = UnivariatePolyObjective::sum(&objectives)?;
    let mut report = minimize_objective(&total, &velocity_cost(), &cfg.solver)?;
    report.samples_used.n = samples.robot.len();
    report.samples_used.n_w1 = cfg.desired.n_w1;
    report.samples_used.n_w2 = cfg.desired.n_w2;
    report.wall_time = start.elapsed();
    Ok(AvoidOutcome {
        report,
        desired,
        objectives,
        constraints,
    })
}

/// Joint and per-obstacle held-out satisfaction at `u`.
pub fn validate_avoidance(
    constraints: &[PolynomialChanceConstraint],
    u: f64,
    robot: &[Sample],
    obstacles: &[Vec<Sample>],
) -> Result<(f64, Vec<f64>)> {
    let refs: Vec<&dyn ChanceConstraint> = constraints.iter().map(|c| c as &dyn ChanceConstraint).collect();
    let pools: Vec<&[Sample]> = obstacles.iter().map(Vec::as_slice).collect();
    let joint = validate_joint(&refs, &[u], robot, &pools, Pairing::Paired)?;
    let per = refs
        .iter()
        .zip(&pools)
        .map(|(c, w2)| validate_joint(&[*c], &[u], robot, &[*w2], Pairing::Paired))
        .collect::<Result<Vec<_>>>()?;
    Ok((joint, per))
}

/// A robot, its obstacles and their state noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionScene {
    pub robot: AgentState,
    pub obstacles: Vec<AgentState>,
    pub robot_noise: StateNoise,
    pub obstacle_noise: StateNoise,
}

impl CollisionScene {
    /// Crossing geometry: the robot heads along +x, the obstacle along +y,
    /// and they meet at `(4, 0)` after 4 s when `u = 1`.
    pub fn crossing(robot_noise: StateNoise, obstacle_noise: StateNoise) -> Self {
        Self {
            robot: AgentState {
                position: [0.0, 0.0],
                velocity: [1.0, 0.0],
                radius: 0.5,
            },
            obstacles: vec![AgentState {
                position: [4.0, -4.0],
                velocity: [0.0, 1.0],
                radius: 0.5,
            }],
            robot_noise,
            obstacle_noise,
        }
    }

    pub fn radii(&self) -> Vec<f64> {
        self.obstacles.iter().map(|o| self.robot.radius + o.radius).collect()
    }

    /// `n` embedding samples per agent, plus `extra_robot` / `extra_obstacle`
    /// samples reserved for the desired-set pools.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        n: usize,
        extra_robot: usize,
        extra_obstacle: usize,
        rng: &mut R,
    ) -> Result<AvoidSamples> {
        let rs = self.robot_noise.sampler()?;
        let os = self.obstacle_noise.sampler()?;
        let robot = rs.draw(&self.robot, n, rng);
        let robot_extra = rs.draw(&self.robot, extra_robot, rng);
        let mut obstacles = Vec::new();
        let mut obstacles_extra = Vec::new();
        for o in &self.obstacles {
            obstacles.push(os.draw(o, n, rng));
            obstacles_extra.push(os.draw(o, extra_obstacle, rng));
        }
        Ok(AvoidSamples {
            robot,
            obstacles,
            robot_extra,
            obstacles_extra,
            radii: self.radii(),
        })
    }

    /// Held-out robot samples and one obstacle set per obstacle.
    pub fn holdout<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(Vec<Sample>, Vec<Vec<Sample>>)> {
        let rs = self.robot_noise.sampler()?;
        let os = self.obstacle_noise.sampler()?;
        let robot = rs.draw(&self.robot, n, rng);
        let obstacles = self.obstacles.iter().map(|o| os.draw(o, n, rng)).collect();
        Ok((robot, obstacles))
    }
}

/// One step of a closed-loop avoidance run.
#[derive(Debug, Clone, PartialEq)]
pub struct AvoidRecord {
    pub time: f64,
    pub robot: AgentState,
    pub u_star: f64,
    pub min_clearance: f64,
    pub fallback: bool,
}

/// Closed loop: at every step the robot re-solves, draws a velocity sample
/// from its belief and executes it scaled by `u*`; obstacles move at their
/// nominal velocities. An infeasible step stops the robot (`u = 0`).
pub fn run_avoidance<R: Rng + ?Sized>(
    scene: &CollisionScene,
    cfg: &AvoidConfig,
    n: usize,
    steps: usize,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<AvoidRecord>> {
    let mut state = scene.clone();
    let rs = scene.robot_noise.sampler()?;
    let mut out = Vec::with_capacity(steps);
    for step in 0..steps {
        let samples = state.draw(n, cfg.desired.n_w1, cfg.desired.n_w2, rng)?;
        let (u, fallback) = match avoid_step(&samples, cfg, rng) {
            Ok(o) => (o.report.u_star[0], false),
            Err(e) => {
                log::warn!("step {step}: {e}; stopping");
                (0.0, true)
            }
        };
        let executed = rs.draw(&state.robot, 1, rng).remove(0);
        state.robot.position[0] += u * executed[2] * dt;
        state.robot.position[1] += u * executed[3] * dt;
        for o in &mut state.obstacles {
            o.position[0] += o.velocity[0] * dt;
            o.position[1] += o.velocity[1] * dt;
        }
        let min_clearance = state
            .obstacles
            .iter()
            .map(|o| {
                let d = [
                    state.robot.position[0] - o.position[0],
                    state.robot.position[1] - o.position[1],
                ];
                (d[0] * d[0] + d[1] * d[1]).sqrt() - state.robot.radius - o.radius
            })
            .fold(f64::INFINITY, f64::min);
        out.push(AvoidRecord {
            time: (step + 1) as f64 * dt,
            robot: state.robot,
            u_star: u,
            min_clearance,
            fallback,
        });
    }
    Ok(out)
}
