#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rkhs_cc::apps::collision::{AvoidConfig, CollisionScene, StateNoise};
use rkhs_cc::constraint::Sample;
use rkhs_cc::desired::{DesiredConfig, DesiredDistribution};
use rkhs_cc::embedding::WeightedSampleSet;
use rkhs_cc::kernel::KernelSpec;
use rkhs_cc::objective::EmbeddingPath;
use rkhs_cc::solvers::SolverConfig;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for held-out samples.
pub fn holdout_rng(seed: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(1);
    r
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn jitter(rng: &mut ChaCha8Rng, n: usize, center: [f64; 4], std: f64) -> Vec<Sample> {
    (0..n)
        .map(|_| {
            center
                .iter()
                .map(|c| c + std * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

/// Benchmark noise shared by the collision tests.
pub fn benchmark_noise() -> StateNoise {
    StateNoise::shaped(0.15, 0.1, 0.8, 4.5)
}

pub fn benchmark_scene() -> CollisionScene {
    CollisionScene::crossing(benchmark_noise(), benchmark_noise())
}

pub fn avoid_config(degree: u32, n_w: usize, rho1: f64) -> AvoidConfig {
    AvoidConfig {
        solver: SolverConfig {
            rho1,
            rho2: 1.0,
            degree,
            ..SolverConfig::default()
        },
        kernel: KernelSpec::polynomial(degree).with_scale(0.01),
        desired: DesiredConfig {
            n_w1: n_w,
            n_w2: n_w,
            ..DesiredConfig::default()
        },
        path: EmbeddingPath::Pushforward,
    }
}

pub fn desired_from(values: Vec<f64>, u_nom: Vec<f64>) -> DesiredDistribution {
    DesiredDistribution {
        set: WeightedSampleSet::uniform(values).unwrap(),
        u_nom,
        source_w1: WeightedSampleSet::uniform(vec![vec![0.0]]).unwrap(),
        source_w2: WeightedSampleSet::uniform(vec![vec![0.0]]).unwrap(),
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}
