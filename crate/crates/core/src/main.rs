use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rkhs_cc::apps::collision::collision_constraint;
use rkhs_cc::apps::manipulator::torque_satisfaction;
use rkhs_cc::constraint::ChanceConstraint;
use rkhs_cc::embedding::WeightedSampleSet;
use rkhs_cc::io::config::{Application, ExperimentConfig};
use rkhs_cc::io::report::{parse_report, write_report, write_summary, SummaryRow};
use rkhs_cc::io::samples::{ingest_samples, parse_holdout, write_samples, Holdout};
use rkhs_cc::kernel::{median_pairwise_distance, KernelSpec};
use rkhs_cc::reduced_set::{embedding_residual, reduce_random};
use rkhs_cc::solvers::validate_joint;
use rkhs_cc::{experiment, oracle, Error, Result};

#[derive(Parser)]
#[command(
    name = "rkhs-cc",
    version,
    about = "Chance-constrained decisions from samples via kernel mean embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a config and write report.csv and summary.csv.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat the experiment for each value of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `name=v1,v2,...` with name one of d, rho1, rho2, n, n_w, n_w1, n_w2,
        /// scale, target_eta, tau_max.
        #[arg(long)]
        param: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-validate the decisions of a report on a held-out sample file.
    Validate {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        holdout: PathBuf,
        /// Config the report came from (radii, arm parameters).
        #[arg(long)]
        config: PathBuf,
        /// Write the updated report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit reduced-set weights for a random subset of a sample file.
    Reduce {
        #[arg(long)]
        full: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = ReduceKernel::Rbf)]
        kernel: ReduceKernel,
        /// RBF bandwidth (default: median pairwise distance).
        #[arg(long)]
        bandwidth: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in oracle checks and print pass/fail per check.
    Oracle {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReduceKernel {
    Rbf,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn print_summary(s: &[SummaryRow]) -> Result<()> {
    write_summary(std::io::stderr().lock(), s)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Solve { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            let dir = out.unwrap_or_else(|| cfg.output.clone());
            let (_, summary) = experiment::run_experiment(&cfg, &dir)?;
            print_summary(&[summary])?;
        }
        Command::Sweep { config, param, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (key, values) = param
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--param: expected name=v1,v2,..., got {param:?}")))?;
            let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
            let dir = out.unwrap_or_else(|| cfg.output.clone());
            let summaries = experiment::run_sweep(&cfg, key.trim(), &values, &dir)?;
            print_summary(&summaries)?;
        }
        Command::Validate {
            report,
            holdout,
            config,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let mut rows = parse_report(File::open(&report)?)?;
            let h = parse_holdout(File::open(&holdout)?)?;
            for r in &mut rows {
                match (&h, cfg.application) {
                    (
                        Holdout::Planar { robot, obstacles },
                        Application::CollisionSingle | Application::CollisionMulti,
                    ) => {
                        let c = cfg
                            .collision
                            .as_ref()
                            .ok_or_else(|| Error::Config("collision: section required".into()))?;
                        if obstacles.len() != c.obstacles.len() {
                            return Err(Error::DimensionMismatch {
                                expected: c.obstacles.len(),
                                got: obstacles.len(),
                            });
                        }
                        let cons: Vec<_> = c
                            .obstacles
                            .iter()
                            .map(|o| collision_constraint(c.robot.radius + o.radius))
                            .collect();
                        let refs: Vec<&dyn ChanceConstraint> =
                            cons.iter().map(|x| x as &dyn ChanceConstraint).collect();
                        let pools: Vec<&[Vec<f64>]> = obstacles.iter().map(Vec::as_slice).collect();
                        r.empirical_eta = Some(validate_joint(&refs, &r.u_star, robot, &pools, cfg.budget.pairing)?);
                        r.n_holdout = robot.len();
                        if !r.constraint_eta.is_empty() {
                            r.constraint_eta = refs
                                .iter()
                                .zip(&pools)
                                .map(|(c, w2)| validate_joint(&[*c], &r.u_star, robot, &[*w2], cfg.budget.pairing))
                                .collect::<Result<_>>()?;
                        }
                    }
                    (Holdout::Joint { q, qd }, Application::Tracking) => {
                        let t = cfg
                            .tracking
                            .as_ref()
                            .ok_or_else(|| Error::Config("tracking: section required".into()))?;
                        if r.u_star.len() != 2 {
                            return Err(Error::DimensionMismatch {
                                expected: 2,
                                got: r.u_star.len(),
                            });
                        }
                        r.empirical_eta = Some(torque_satisfaction(&r.u_star, q, qd, &t.arm).0);
                        r.n_holdout = q.len();
                    }
                    _ => {
                        return Err(Error::Config(
                            "holdout columns do not match the config's application".into(),
                        ))
                    }
                }
            }
            write_report(output(&out)?, &rows)?;
        }
        Command::Reduce {
            full,
            n,
            kernel: ReduceKernel::Rbf,
            bandwidth,
            seed,
            out,
        } => {
            let f = ingest_samples(&full)?;
            let pts = f.set.values().to_vec();
            let spec = KernelSpec::rbf(bandwidth.unwrap_or_else(|| median_pairwise_distance(&pts)));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (idx, fit) = reduce_random(&mut rng, &pts, n, &spec)?;
            let reduced: Vec<Vec<f64>> = idx.iter().map(|&i| pts[i].clone()).collect();
            let uniform = embedding_residual(&pts, &reduced, &vec![1.0 / reduced.len() as f64; reduced.len()], &spec)?;
            eprintln!(
                "reduced {} -> {}: residual {:e} (uniform weights {:e}), ridge {:e}",
                fit.source_size, fit.reduced_size, fit.residual, uniform, fit.ridge
            );
            let set = WeightedSampleSet::new(reduced, fit.weights)?;
            write_samples(output(&out)?, f.layout, &set)?;
        }
        Command::Oracle { seed } => {
            let checks = oracle::run_all(seed);
            let mut all = true;
            for c in &checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
                all &= c.pass;
            }
            return Ok(all);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(k) = std::env::var("RKHS_CC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            log::warn!("RKHS_CC_THREADS ignored: {e}");
        }
    }
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
