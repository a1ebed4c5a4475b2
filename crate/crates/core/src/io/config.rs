//! Experiment configuration (TOML).
//!
//! ```toml
//! application = "collision-single"
//! solver = "rkhs"
//! seeds = [0, 1, 2]
//!
//! [kernel]
//! degree = 3
//! scale = 0.01
//!
//! [weights]
//! rho1 = 100.0
//! rho2 = 1.0
//!
//! [budget]
//! n = 40
//! n_w1 = 20
//! n_w2 = 20
//! n_holdout = 100000
//!
//! [collision]
//! robot = { position = [0.0, 0.0], velocity = [1.0, 0.0], radius = 0.5 }
//! obstacles = [{ position = [4.0, -4.0], velocity = [0.0, 1.0], radius = 0.5 }]
//! robot_noise = { position_std = 0.15, velocity_std = 0.1, skewness = 0.8, kurtosis = 4.5 }
//! obstacle_noise = { position_std = 0.15, velocity_std = 0.1, skewness = 0.8, kurtosis = 4.5 }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::apps::collision::{AgentState, StateNoise};
use crate::apps::manipulator::{ArmParams, Reference};
use crate::apps::moments::FourMomentSpec;
use crate::desired::Weighting;
use crate::error::{Error, Result};
use crate::objective::EmbeddingPath;
use crate::solvers::Pairing;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Application {
    CollisionSingle,
    CollisionMulti,
    Tracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    #[default]
    Rkhs,
    Scenario,
    Saa,
    Meanvar,
}

impl SolverKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Rkhs => "rkhs",
            Self::Scenario => "scenario",
            Self::Saa => "saa",
            Self::Meanvar => "meanvar",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub degree: u32,
    pub offset: f64,
    pub scale: f64,
    pub path: EmbeddingPath,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            degree: 3,
            offset: 1.0,
            scale: 0.01,
            path: EmbeddingPath::Pushforward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsSection {
    pub rho1: f64,
    pub rho2: f64,
}

impl Default for WeightsSection {
    fn default() -> Self {
        Self { rho1: 100.0, rho2: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetSection {
    pub n: usize,
    pub n_w1: usize,
    pub n_w2: usize,
    pub n_holdout: usize,
    pub trials: usize,
    pub weighting: Weighting,
    pub pairing: Pairing,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            n: 40,
            n_w1: 20,
            n_w2: 20,
            n_holdout: 100_000,
            trials: 50,
            weighting: Weighting::ReducedSet,
            pairing: Pairing::Paired,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSection {
    pub target_eta: f64,
    /// Lower bound on the scalar decision.
    pub lower: f64,
    pub horizon: f64,
    pub grid_resolution: f64,
}

impl Default for SolveSection {
    fn default() -> Self {
        Self {
            target_eta: 0.9,
            lower: 0.0,
            horizon: 5.0,
            grid_resolution: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    /// Samples per parameter for the scenario baseline (default: `n`).
    pub scenario_n: Option<usize>,
    /// SAA satisfaction level (default: `target_eta`).
    pub saa_gamma: Option<f64>,
    /// Mean-variance `ε` (default: Cantelli inversion of `target_eta`).
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub position_std: f64,
    pub velocity_std: f64,
    #[serde(default)]
    pub skewness: f64,
    #[serde(default = "gaussian_kurtosis")]
    pub kurtosis: f64,
}

fn gaussian_kurtosis() -> f64 {
    3.0
}

impl NoiseSection {
    pub fn to_noise(&self) -> StateNoise {
        StateNoise::shaped(self.position_std, self.velocity_std, self.skewness, self.kurtosis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollisionSection {
    pub robot: AgentState,
    pub obstacles: Vec<AgentState>,
    pub robot_noise: NoiseSection,
    pub obstacle_noise: NoiseSection,
    /// Optional sample files replacing the drawn embedding samples and
    /// desired-set extras (first `n` rows, then the extras).
    #[serde(default)]
    pub robot_samples: Option<PathBuf>,
    #[serde(default)]
    pub obstacle_samples: Option<Vec<PathBuf>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingSection {
    #[serde(default)]
    pub arm: ArmParams,
    #[serde(default)]
    pub reference: Option<Reference>,
    /// CSV with columns `t,x,y,xdot,ydot,xddot,yddot`.
    #[serde(default)]
    pub reference_file: Option<PathBuf>,
    pub angle_noise: FourMomentSpec,
    pub velocity_noise: FourMomentSpec,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_fan")]
    pub fan_size: usize,
    /// Also write every step's torque fan.
    #[serde(default)]
    pub write_fan: bool,
}

fn default_steps() -> usize {
    100
}
fn default_dt() -> f64 {
    0.05
}
fn default_fan() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub application: Application,
    #[serde(default)]
    pub solver: SolverKind,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Record wall-clock time in reports (makes them non-reproducible).
    #[serde(default)]
    pub timing: bool,
    /// Write per-seed distribution snapshots (RKHS collision runs).
    #[serde(default)]
    pub snapshots: bool,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub weights: WeightsSection,
    #[serde(default)]
    pub budget: BudgetSection,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub baseline: BaselineSection,
    #[serde(default)]
    pub collision: Option<CollisionSection>,
    #[serde(default)]
    pub tracking: Option<TrackingSection>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

fn field(name: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{name}: {msg}"))
}

impl ExperimentConfig {
    pub fn parse(src: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(src).map_err(|e| Error::Parse {
            line: e.span().map(|s| line_of(src, s.start)).unwrap_or(0),
            msg: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&src)?;
        // Relative paths inside the config resolve against its directory.
        if let Some(dir) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            if let Some(c) = cfg.collision.as_mut() {
                c.robot_samples.as_mut().map(fix);
                if let Some(v) = c.obstacle_samples.as_mut() {
                    v.iter_mut().for_each(fix);
                }
            }
            if let Some(t) = cfg.tracking.as_mut() {
                t.reference_file.as_mut().map(fix);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(field("seeds", "must list at least one seed"));
        }
        let b = &self.budget;
        for (name, v) in [
            ("budget.n", b.n),
            ("budget.n_w1", b.n_w1),
            ("budget.n_w2", b.n_w2),
            ("budget.n_holdout", b.n_holdout),
            ("budget.trials", b.trials),
        ] {
            if v == 0 {
                return Err(field(name, "must be positive"));
            }
        }
        if self.kernel.degree == 0 {
            return Err(field("kernel.degree", "must be >= 1"));
        }
        if !(self.kernel.scale > 0.0) || !(self.kernel.offset >= 0.0) {
            return Err(field("kernel", "scale must be > 0 and offset >= 0"));
        }
        let w = &self.weights;
        if !(w.rho1 >= 0.0 && w.rho2 >= 0.0 && w.rho1 + w.rho2 > 0.0) {
            return Err(field("weights", "rho1, rho2 must be >= 0 with a positive sum"));
        }
        let s = &self.solve;
        if !(s.target_eta > 0.0 && s.target_eta < 1.0) {
            return Err(field("solve.target_eta", "must lie in (0, 1)"));
        }
        if !(s.horizon > 0.0 && s.grid_resolution > 0.0) || !s.lower.is_finite() {
            return Err(field("solve", "horizon and grid_resolution must be positive"));
        }
        if let Some(g) = self.baseline.saa_gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(field("baseline.saa_gamma", "must lie in [0, 1]"));
            }
        }
        if let Some(e) = self.baseline.epsilon {
            if !(e >= 0.0) {
                return Err(field("baseline.epsilon", "must be >= 0"));
            }
        }
        if self.baseline.scenario_n == Some(0) {
            return Err(field("baseline.scenario_n", "must be positive"));
        }
        match self.application {
            Application::CollisionSingle | Application::CollisionMulti => {
                let c = self
                    .collision
                    .as_ref()
                    .ok_or_else(|| field("collision", "section required"))?;
                if self.application == Application::CollisionSingle && c.obstacles.len() != 1 {
                    return Err(field(
                        "collision.obstacles",
                        "collision-single needs exactly one obstacle",
                    ));
                }
                if c.obstacles.is_empty() {
                    return Err(field("collision.obstacles", "at least one obstacle required"));
                }
                for (i, a) in std::iter::once(&c.robot).chain(&c.obstacles).enumerate() {
                    if !(a.radius > 0.0) {
                        return Err(field("collision", format!("agent {i} radius must be > 0")));
                    }
                }
                for (name, n) in [("robot_noise", &c.robot_noise), ("obstacle_noise", &c.obstacle_noise)] {
                    n.to_noise()
                        .sampler()
                        .map_err(|e| field(&format!("collision.{name}"), e))?;
                }
                if let Some(v) = &c.obstacle_samples {
                    if v.len() != c.obstacles.len() {
                        return Err(field("collision.obstacle_samples", "one file per obstacle"));
                    }
                }
            }
            Application::Tracking => {
                let t = self
                    .tracking
                    .as_ref()
                    .ok_or_else(|| field("tracking", "section required"))?;
                t.arm.validate().map_err(|e| field("tracking.arm", e))?;
                if t.reference.is_none() == t.reference_file.is_none() {
                    return Err(field("tracking", "give exactly one of reference, reference_file"));
                }
                if !matches!(self.solver, SolverKind::Rkhs | SolverKind::Scenario) {
                    return Err(field("solver", "tracking supports rkhs and scenario"));
                }
                if t.steps == 0 || t.fan_size == 0 || !(t.dt > 0.0) {
                    return Err(field("tracking", "steps, fan_size and dt must be positive"));
                }
                for (name, n) in [("angle_noise", &t.angle_noise), ("velocity_noise", &t.velocity_noise)] {
                    crate::apps::moments::FourMomentSampler::new(*n)
                        .map_err(|e| field(&format!("tracking.{name}"), e))?;
                }
            }
        }
        Ok(())
    }

    /// Applies `key=value` overrides used by sweeps.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut c = self.clone();
        let num = |v: &str| -> Result<f64> { v.parse().map_err(|_| field(key, format!("not a number: {v:?}"))) };
        let int = |v: &str| -> Result<usize> { v.parse().map_err(|_| field(key, format!("not an integer: {v:?}"))) };
        match key {
            "d" | "degree" => c.kernel.degree = int(value)? as u32,
            "rho1" => c.weights.rho1 = num(value)?,
            "rho2" => c.weights.rho2 = num(value)?,
            "n" => c.budget.n = int(value)?,
            "n_w" => {
                c.budget.n_w1 = int(value)?;
                c.budget.n_w2 = c.budget.n_w1;
            }
            "n_w1" => c.budget.n_w1 = int(value)?,
            "n_w2" => c.budget.n_w2 = int(value)?,
            "scale" => c.kernel.scale = num(value)?,
            "target_eta" => c.solve.target_eta = num(value)?,
            "tau_max" => {
                c.tracking
                    .as_mut()
                    .ok_or_else(|| field(key, "needs a tracking section"))?
                    .arm
                    .tau_max = num(value)?
            }
            _ => return Err(field(key, "unknown sweep parameter")),
        }
        c.validate()?;
        Ok(c)
    }
}
