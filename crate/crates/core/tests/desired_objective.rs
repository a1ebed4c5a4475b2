mod common;

use proptest::prelude::*;
use rand::Rng;

use common::{desired_from, jitter, normals, rel_err, rng};
use rkhs_cc::apps::collision::collision_constraint;
use rkhs_cc::constraint::{
    evaluate_coefficient_matrices, AffineChanceConstraint, ChanceConstraint, CoefficientMatrices,
    PolynomialChanceConstraint, Sample,
};
use rkhs_cc::desired::{
    build_desired, construct_desired, select_scenario_sets, solve_scenario, violation_score, DesiredConfig,
    ScenarioCost, ScenarioTerm, Weighting,
};
use rkhs_cc::embedding::{mmd_squared, WeightedSampleSet};
use rkhs_cc::kernel::{gram, KernelSpec};
use rkhs_cc::objective::{assemble_affine, assemble_univariate, embed_affine_at, embed_at, EmbeddingPath};
use rkhs_cc::poly::Polynomial;
use rkhs_cc::solvers::scan_grid;
use rkhs_cc::Error;

const ROBOT: [f64; 4] = [0.0, 0.0, 1.0, 0.0];
const OBSTACLE: [f64; 4] = [4.0, -4.0, 0.0, 1.0];

fn scalar_cost(lo: f64, hi: f64) -> ScenarioCost {
    ScenarioCost::Scalar {
        lo,
        hi,
        cost: Polynomial::squared_deviation(1.0),
    }
}

fn grid_of(c: &dyn ChanceConstraint, w1: &[Sample], w2: &[Sample]) -> CoefficientMatrices {
    evaluate_coefficient_matrices(
        c,
        &WeightedSampleSet::uniform(w1.to_vec()).unwrap(),
        &WeightedSampleSet::uniform(w2.to_vec()).unwrap(),
    )
}

#[test]
fn scenario_closed_forms() {
    let w = vec![vec![0.0]];
    let circle = PolynomialChanceConstraint::new(2, |_, _| vec![-1.0, 0.0, 1.0]);
    let t = ScenarioTerm {
        constraint: &circle,
        w1: &w,
        w2: &w,
    };
    let u = solve_scenario(&[t], &[0], &[0], &scalar_cost(0.0, 5.0)).unwrap();
    assert!((u[0] - 1.0).abs() <= 1e-9);

    let floor = PolynomialChanceConstraint::new(1, |_, _| vec![2.0, -1.0]);
    let t = ScenarioTerm {
        constraint: &floor,
        w1: &w,
        w2: &w,
    };
    let u = solve_scenario(&[t], &[0], &[0], &scalar_cost(0.0, 5.0)).unwrap();
    assert!((u[0] - 2.0).abs() <= 1e-9);

    let never = PolynomialChanceConstraint::new(0, |_, _| vec![1.0]);
    let t = ScenarioTerm {
        constraint: &never,
        w1: &w,
        w2: &w,
    };
    assert!(matches!(
        solve_scenario(&[t], &[0], &[0], &scalar_cost(0.0, 5.0)),
        Err(Error::InfeasibleScenario(_))
    ));
}

#[test]
fn scenario_matches_grid_oracle() {
    let c = collision_constraint(1.0);
    for seed in 0..5 {
        let mut r = rng(100 + seed);
        let w1 = jitter(&mut r, 20, ROBOT, 0.1);
        let w2 = jitter(&mut r, 20, OBSTACLE, 0.1);
        let all: Vec<usize> = (0..20).collect();
        let t = ScenarioTerm {
            constraint: &c,
            w1: &w1,
            w2: &w2,
        };
        let got = solve_scenario(&[t], &all, &all, &scalar_cost(0.0, 5.0)).unwrap()[0];
        let fields: Vec<Vec<f64>> = w1.iter().flat_map(|a| w2.iter().map(|b| c.fields(a, b))).collect();
        let j = |u: f64| (u - 1.0) * (u - 1.0);
        let best = scan_grid(0.0, 5.0, 1e-4)
            .into_iter()
            .filter(|u| fields.iter().all(|f| c.value(f, &[*u]) <= 1e-9))
            .min_by(|a, b| j(*a).total_cmp(&j(*b)))
            .expect("grid finds a feasible point");
        assert!(j(got) <= j(best) + 1e-9, "seed {seed}: {got} vs {best}");
        assert!(fields.iter().all(|f| c.value(f, &[got]) <= 1e-9));
    }
}

#[test]
fn subset_selection() {
    let c = collision_constraint(1.0);
    let mut r = rng(7);
    let w1 = jitter(&mut r, 40, ROBOT, 0.3);
    let w2 = jitter(&mut r, 40, OBSTACLE, 0.3);
    let probe = [1.0];

    // One trial: exactly the first pair the generator would draw.
    let mut a = rng(8);
    let picked = select_scenario_sets(&c, &w1, &w2, 5, 5, 1, &probe, &mut a).unwrap();
    let mut b = rng(8);
    let first = (
        rkhs_cc::reduced_set::random_subset(&mut b, 40, 5),
        rkhs_cc::reduced_set::random_subset(&mut b, 40, 5),
    );
    assert_eq!(picked, first);

    // Five trials against exhaustive scoring of the same five candidates.
    let mut a = rng(9);
    let picked = select_scenario_sets(&c, &w1, &w2, 5, 5, 5, &probe, &mut a).unwrap();
    let mut b = rng(9);
    let t = ScenarioTerm {
        constraint: &c,
        w1: &w1,
        w2: &w2,
    };
    let best = (0..5)
        .map(|_| {
            let x = rkhs_cc::reduced_set::random_subset(&mut b, 40, 5);
            let y = rkhs_cc::reduced_set::random_subset(&mut b, 40, 5);
            (violation_score(&[t], &x, &y, &probe), x, y)
        })
        .min_by(|p, q| {
            p.0.total_cmp(&q.0)
                .then_with(|| p.1.cmp(&q.1))
                .then_with(|| p.2.cmp(&q.2))
        })
        .unwrap();
    assert_eq!(picked, (best.1, best.2));
}

#[test]
fn zero_violation_pair_wins() {
    let c = AffineChanceConstraint::new(1, |a, _| vec![a[0], 0.0]);
    let w1: Vec<Sample> = (0..10).map(|k| vec![if k < 5 { -1.0 } else { 1.0 }]).collect();
    let w2 = vec![vec![0.0]; 10];
    let mut r = rng(3);
    let (idx1, _) = select_scenario_sets(&c, &w1, &w2, 2, 1, 200, &[0.0], &mut r).unwrap();
    assert!(idx1.iter().all(|&i| i < 5));
}

#[test]
fn desired_single_pair_and_uniform() {
    let c = collision_constraint(1.0);
    let mut r = rng(21);
    let w1 = jitter(&mut r, 10, ROBOT, 0.1);
    let w2 = jitter(&mut r, 10, OBSTACLE, 0.1);
    let t = ScenarioTerm {
        constraint: &c,
        w1: &w1,
        w2: &w2,
    };
    let u = solve_scenario(&[t], &[3], &[4], &scalar_cost(0.0, 5.0)).unwrap();
    let d = build_desired(&t, &[3], &[4], &u, Weighting::Uniform).unwrap();
    assert_eq!(d.values(), &[c.eval(&w1[3], &w2[4], &u)]);
    assert_eq!(d.weights(), &[1.0]);

    let idx: Vec<usize> = (0..4).collect();
    let u = solve_scenario(&[t], &idx, &idx[..2], &scalar_cost(0.0, 5.0)).unwrap();
    let d = build_desired(&t, &idx, &idx[..2], &u, Weighting::Uniform).unwrap();
    assert!(d.weights().iter().all(|w| (w - 0.125).abs() <= 1e-15));

    // Nominal speed runs into the obstacle, so it is a stale u_nom.
    assert!(build_desired(&t, &idx, &idx, &[1.0], Weighting::Uniform).is_err());
}

#[test]
fn constructed_desired_is_feasible() {
    let c = collision_constraint(1.0);
    for seed in 0..5 {
        let mut r = rng(200 + seed);
        let w1 = jitter(&mut r, 60, ROBOT, 0.15);
        let w2 = jitter(&mut r, 60, OBSTACLE, 0.15);
        let t = ScenarioTerm {
            constraint: &c,
            w1: &w1,
            w2: &w2,
        };
        let cfg = DesiredConfig::default();
        let cost = scalar_cost(0.0, 5.0);
        let d = construct_desired(&[t], &cost, &[1.0], &cfg, &mut r).unwrap().remove(0);
        assert_eq!(d.set.len(), 400);
        let sat = d.values().iter().filter(|v| **v <= 0.0).count() as f64 / d.set.len() as f64;
        assert!(d.values().iter().all(|v| *v <= 1e-9));
        assert!(sat >= 1.0 - 1e-12 || d.values().iter().all(|v| *v <= 1e-9));
        assert!((d.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        // Re-evaluate f on the stored grid.
        let mut k = 0;
        for a in d.source_w1.values() {
            for b in d.source_w2.values() {
                assert_eq!(d.values()[k], c.eval(a, b, &d.u_nom));
                k += 1;
            }
        }
        // u_nom is grid-optimal within the scenario feasible set of its subsets.
        let fields: Vec<Vec<f64>> = d
            .source_w1
            .values()
            .iter()
            .flat_map(|a| d.source_w2.values().iter().map(|b| c.fields(a, b)))
            .collect();
        let j = |u: f64| (u - 1.0) * (u - 1.0);
        for u in scan_grid(0.0, 5.0, 1e-3) {
            if fields.iter().all(|f| c.value(f, &[u]) <= 0.0) {
                assert!(j(d.u_nom[0]) <= j(u) + 1e-9);
            }
        }
    }
}

#[test]
fn joint_desired_shares_u_nom() {
    let (c1, c2) = (collision_constraint(1.0), collision_constraint(0.8));
    let mut r = rng(31);
    let w1 = jitter(&mut r, 40, ROBOT, 0.1);
    let o1 = jitter(&mut r, 40, OBSTACLE, 0.1);
    let o2 = jitter(&mut r, 40, [6.0, 3.0, 0.0, -0.6], 0.1);
    let terms = [
        ScenarioTerm {
            constraint: &c1,
            w1: &w1,
            w2: &o1,
        },
        ScenarioTerm {
            constraint: &c2,
            w1: &w1,
            w2: &o2,
        },
    ];
    let cfg = DesiredConfig {
        n_w1: 10,
        n_w2: 10,
        ..DesiredConfig::default()
    };
    let ds = construct_desired(&terms, &scalar_cost(0.0, 5.0), &[1.0], &cfg, &mut r).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(ds[0].u_nom, ds[1].u_nom);
    assert!(ds.iter().all(|d| d.values().iter().all(|v| *v <= 1e-9)));
}

/// Signed weighted point set of `Σ_i uⁱ μ_{h_i}`, compared to the desired
/// embedding through an explicit Gram quadratic form.
fn coefficient_linear_direct(
    cm: &CoefficientMatrices,
    u: f64,
    des: &WeightedSampleSet<f64>,
    spec: &KernelSpec,
    inv: f64,
) -> f64 {
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    for i in 0..cm.field_count() {
        for p in 0..cm.len() {
            xs.push(cm.point(p)[i] * inv);
            ws.push(cm.product_weights[p] * u.powi(i as i32));
        }
    }
    for (y, v) in des.iter() {
        xs.push(y * inv);
        ws.push(-v);
    }
    gram(&xs, &xs, spec).unwrap().contract(&ws, &ws)
}

#[test]
fn oracle_identity_both_paths() {
    let c = collision_constraint(1.0);
    for seed in 0..10 {
        let mut r = rng(300 + seed);
        let w1 = jitter(&mut r, 8, ROBOT, 0.3);
        let w2 = jitter(&mut r, 7, OBSTACLE, 0.3);
        let cm = grid_of(&c, &w1, &w2);
        let des = desired_from(normals(&mut r, 12).iter().map(|x| -1.0 - x.abs()).collect(), vec![0.5]);
        for degree in [1, 2, 3, 5] {
            let spec = KernelSpec::polynomial(degree).with_scale(0.5);
            let push = assemble_univariate(&cm, &des, &spec, EmbeddingPath::Pushforward).unwrap();
            let lin = assemble_univariate(&cm, &des, &spec, EmbeddingPath::CoefficientLinear).unwrap();
            let inv = 1.0 / push.scale_factor;
            for _ in 0..20 {
                let u: f64 = r.random_range(0.0..3.0);
                let direct = mmd_squared(&embed_at(&cm, u).unwrap().scaled(inv), &des.set.scaled(inv), &spec).unwrap();
                assert!(
                    rel_err(push.eval(u), direct) <= 1e-8,
                    "d={degree} u={u}: {} vs {direct}",
                    push.eval(u)
                );
                let direct = coefficient_linear_direct(&cm, u, &des.set, &spec, inv);
                assert!(
                    rel_err(lin.eval(u), direct) <= 1e-8,
                    "linear d={degree} u={u}: {} vs {direct}",
                    lin.eval(u)
                );
                assert!(push.eval(u) >= -1e-9 && lin.eval(u) >= -1e-9);
            }
        }
    }
}

#[test]
fn objective_degree_contract() {
    let c = collision_constraint(1.0);
    let mut r = rng(41);
    let w1 = jitter(&mut r, 6, ROBOT, 0.3);
    let w2 = jitter(&mut r, 6, OBSTACLE, 0.3);
    let cm = grid_of(&c, &w1, &w2);
    let des = desired_from(vec![-1.0, -2.0, -0.5], vec![1.0]);
    for d in [1u32, 2, 3] {
        let spec = KernelSpec::polynomial(d).with_scale(0.1);
        let lin = assemble_univariate(&cm, &des, &spec, EmbeddingPath::CoefficientLinear).unwrap();
        assert_eq!(lin.degree(), 4);
        let push = assemble_univariate(&cm, &des, &spec, EmbeddingPath::Pushforward).unwrap();
        assert_eq!(push.degree(), 4 * d as usize);
    }
}

#[test]
fn constant_constraint_objective() {
    let c = PolynomialChanceConstraint::new(0, |a, _| vec![a[0]]);
    let w1: Vec<Sample> = vec![vec![-1.0], vec![-3.0]];
    let w2: Vec<Sample> = vec![vec![0.0]];
    let cm = grid_of(&c, &w1, &w2);
    let des = desired_from(vec![-2.0, -2.5], vec![0.0]);
    let spec = KernelSpec::polynomial(2);
    let obj = assemble_univariate(&cm, &des, &spec, EmbeddingPath::Pushforward).unwrap();
    assert_eq!(obj.degree(), 0);
    let inv = 1.0 / obj.scale_factor;
    let want = mmd_squared(&embed_at(&cm, 0.0).unwrap().scaled(inv), &des.set.scaled(inv), &spec).unwrap();
    assert!(rel_err(obj.coefficients[0], want) <= 1e-12);
}

#[test]
fn identical_desired_vanishes_at_u_nom() {
    let c = collision_constraint(1.0);
    let mut r = rng(51);
    let w1 = jitter(&mut r, 5, ROBOT, 0.2);
    let w2 = jitter(&mut r, 5, OBSTACLE, 0.2);
    let cm = grid_of(&c, &w1, &w2);
    let u_nom = 0.7;
    let at = embed_at(&cm, u_nom).unwrap();
    let des = rkhs_cc::desired::DesiredDistribution {
        set: at.clone(),
        u_nom: vec![u_nom],
        source_w1: WeightedSampleSet::uniform(w1.clone()).unwrap(),
        source_w2: WeightedSampleSet::uniform(w2.clone()).unwrap(),
    };
    let spec = KernelSpec::polynomial(1);
    let obj = assemble_univariate(&cm, &des, &spec, EmbeddingPath::Pushforward).unwrap();
    assert!(obj.eval(u_nom).abs() <= 1e-10);
    // The coefficient-wise embedding only agrees without the kernel offset.
    let spec = spec.with_offset(0.0);
    let obj = assemble_univariate(&cm, &des, &spec, EmbeddingPath::CoefficientLinear).unwrap();
    assert!(obj.eval(u_nom).abs() <= 1e-10);
}

#[test]
fn embed_at_examples() {
    let c = collision_constraint(1.0);
    let mut r = rng(61);
    let w1 = jitter(&mut r, 3, ROBOT, 0.2);
    let w2 = jitter(&mut r, 4, OBSTACLE, 0.2);
    let cm = grid_of(&c, &w1, &w2);
    let at0 = embed_at(&cm, 0.0).unwrap();
    for p in 0..cm.len() {
        assert_eq!(at0.values()[p], cm.point(p)[0]);
    }
    for _ in 0..5 {
        let (a, b) = (r.random_range(0..3), r.random_range(0..4));
        let u: f64 = r.random_range(0.0..3.0);
        let v = embed_at(&cm, u).unwrap().values()[a * 4 + b];
        assert!(rel_err(v, c.eval(&w1[a], &w2[b], &[u])) <= 1e-12);
    }
    let k = PolynomialChanceConstraint::new(2, |_, _| vec![1.0, 0.0, 0.0]);
    let cm = grid_of(&k, &w1, &w2);
    assert!(embed_at(&cm, 2.5).unwrap().values().iter().all(|v| *v == 1.0));
}

fn affine_instance(r: &mut rand_chacha::ChaCha8Rng) -> (AffineChanceConstraint, CoefficientMatrices) {
    let c = AffineChanceConstraint::new(2, |a, b| vec![a[0] + b[0] - 1.0, a[1] * b[1], a[0] - b[1]]);
    let w1: Vec<Sample> = (0..6).map(|_| normals(r, 2)).collect();
    let w2: Vec<Sample> = (0..5).map(|_| normals(r, 2)).collect();
    let cm = grid_of(&c, &w1, &w2);
    (c, cm)
}

#[test]
fn affine_quadratic_matches_direct() {
    let spec = KernelSpec::polynomial(1);
    for seed in 0..10 {
        let mut r = rng(400 + seed);
        let (_, cm) = affine_instance(&mut r);
        let des = desired_from(normals(&mut r, 9).iter().map(|x| -x.abs()).collect(), vec![0.1, -0.2]);
        let q = assemble_affine(std::slice::from_ref(&cm), std::slice::from_ref(&des), &spec).unwrap();
        assert_eq!(q.quad, q.quad.transpose());
        let general =
            rkhs_cc::objective::assemble_affine_general(std::slice::from_ref(&cm), std::slice::from_ref(&des), &spec)
                .unwrap();
        let inv = 1.0 / general.scale_factors()[0];
        for _ in 0..10 {
            let u = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
            let direct = mmd_squared(
                &embed_affine_at(&cm, &u).unwrap().scaled(inv),
                &des.set.scaled(inv),
                &spec,
            )
            .unwrap();
            assert!(rel_err(q.value(&u), direct) <= 1e-8);
        }
    }
}

#[test]
fn affine_zero_slopes_and_scalar_agreement() {
    let spec = KernelSpec::polynomial(1);
    let flat = AffineChanceConstraint::new(2, |a, _| vec![a[0] - 2.0, 0.0, 0.0]);
    let w: Vec<Sample> = vec![vec![0.0], vec![1.0], vec![3.0]];
    let cm = grid_of(&flat, &w, &w[..1]);
    let des = desired_from(vec![-1.0, -1.5], vec![0.0, 0.0]);
    let q = assemble_affine(std::slice::from_ref(&cm), std::slice::from_ref(&des), &spec).unwrap();
    assert!(q.quad.iter().all(|v| *v == 0.0) && q.linear.iter().all(|v| *v == 0.0));
    let inv = 1.0 / rkhs_cc::objective::robust_scale([-1.0, -1.5, -2.0, -1.0, 1.0]);
    let want = mmd_squared(
        &embed_affine_at(&cm, &[0.0, 0.0]).unwrap().scaled(inv),
        &des.set.scaled(inv),
        &spec,
    )
    .unwrap();
    assert!(rel_err(q.constant, want) <= 1e-12);

    // m = 1 agrees with the univariate l = 1 objective.
    let aff = AffineChanceConstraint::new(1, |a, b| vec![a[0] - b[0], a[0] * b[0]]);
    let poly = PolynomialChanceConstraint::new(1, |a, b| vec![a[0] - b[0], a[0] * b[0]]);
    let mut r = rng(71);
    let w1: Vec<Sample> = (0..5).map(|_| normals(&mut r, 1)).collect();
    let w2: Vec<Sample> = (0..4).map(|_| normals(&mut r, 1)).collect();
    let des = desired_from(vec![-0.3, -0.9, -1.2], vec![0.4]);
    let qa = assemble_affine(&[grid_of(&aff, &w1, &w2)], std::slice::from_ref(&des), &spec).unwrap();
    let pu = assemble_univariate(&grid_of(&poly, &w1, &w2), &des, &spec, EmbeddingPath::Pushforward).unwrap();
    for u in [-1.0, 0.0, 0.4, 2.0] {
        assert!(rel_err(qa.value(&[u]), pu.eval(u)) <= 1e-10);
    }
}

#[test]
fn mismatched_desired_list() {
    let mut r = rng(81);
    let (_, cm) = affine_instance(&mut r);
    let des = desired_from(vec![-1.0], vec![0.0, 0.0]);
    let spec = KernelSpec::polynomial(1);
    assert!(assemble_affine(&[cm.clone(), cm], std::slice::from_ref(&des), &spec).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn univariate_objective_nonnegative(seed in 0u64..100_000, d in 1u32..6) {
        let c = collision_constraint(1.0);
        let mut r = rng(seed);
        let w1 = jitter(&mut r, 5, ROBOT, 0.3);
        let w2 = jitter(&mut r, 5, OBSTACLE, 0.3);
        let cm = grid_of(&c, &w1, &w2);
        let des = desired_from(normals(&mut r, 6).iter().map(|x| -x.abs()).collect(), vec![1.0]);
        let spec = KernelSpec::polynomial(d).with_scale(0.3);
        let obj = assemble_univariate(&cm, &des, &spec, EmbeddingPath::Pushforward).unwrap();
        for u in scan_grid(0.0, 3.0, 0.05) {
            prop_assert!(obj.eval(u) >= -1e-9 * (1.0 + obj.coefficients[0].abs()));
        }
    }
}
