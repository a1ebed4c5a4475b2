use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rkhs_cc::embedding::WeightedSampleSet;
use rkhs_cc::io::config::ExperimentConfig;
use rkhs_cc::io::report::parse_report;
use rkhs_cc::io::samples::{
    parse_holdout, parse_samples, write_distribution_snapshot, write_samples, Holdout, SampleLayout,
};
use rkhs_cc::Error;

const BIN: &str = env!("CARGO_BIN_EXE_rkhs-cc");

fn collision_toml(seeds: &str, noise: &str, obstacle: &str, holdout: usize) -> String {
    format!(
        r#"application = "collision-single"
solver = "rkhs"
seeds = {seeds}

[kernel]
degree = 3
offset = 1.0
scale = 0.01

[weights]
rho1 = 100.0
rho2 = 1.0

[budget]
n = 40
n_w1 = 20
n_w2 = 20
n_holdout = {holdout}

[collision]
robot = {{ position = [0.0, 0.0], velocity = [1.0, 0.0], radius = 0.5 }}
obstacles = [{obstacle}]
robot_noise = {noise}
obstacle_noise = {noise}
"#
    )
}

const SHAPED: &str = "{ position_std = 0.15, velocity_std = 0.1, skewness = 0.8, kurtosis = 4.5 }";
const CROSSING: &str = "{ position = [4.0, -4.0], velocity = [0.0, 1.0], radius = 0.5 }";

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn rkhs-cc")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_schema_line(path: &Path) {
    let text = std::fs::read_to_string(path).unwrap();
    let first = text.lines().next().unwrap_or("");
    assert!(first.starts_with("# rkhs-cc "), "{}: {first:?}", path.display());
}

#[test]
fn sample_ingestion_examples() {
    let f = parse_samples("x,y,xdot,ydot\n1,2,3,4\n5,6,7,8\n9,10,11,12\n".as_bytes()).unwrap();
    assert_eq!(f.layout, SampleLayout::Planar);
    assert_eq!(f.set.len(), 3);
    for w in f.set.weights() {
        assert!((w - 1.0 / 3.0).abs() < 1e-15);
    }
    let f = parse_samples("q1,q2,q1dot,q2dot,weight\n0,0,0,0,2\n1,1,1,1,2\n2,2,2,2,0\n".as_bytes()).unwrap();
    assert_eq!(f.layout, SampleLayout::Joint);
    assert_eq!(f.set.weights(), &[0.5, 0.5, 0.0]);
    let (q, qd) = f.split_joint();
    assert_eq!(q[1], vec![1.0, 1.0]);
    assert_eq!(qd[2], vec![2.0, 2.0]);

    // column order is free
    let f = parse_samples("ydot,x,weight,y,xdot\n4,1,1,2,3\n".as_bytes()).unwrap();
    assert_eq!(f.set.values()[0], vec![1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn sample_ingestion_errors_name_the_line() {
    match parse_samples("x,y,xdot,ydot\n1,2,3,4\n1,2,oops,4\n".as_bytes()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        parse_samples("a,b\n1,2\n".as_bytes()),
        Err(Error::Parse { .. })
    ));
    assert!(matches!(
        parse_samples("x,y,xdot,ydot\n".as_bytes()),
        Err(Error::Parse { .. })
    ));
    assert!(matches!(
        parse_samples("x,y,xdot,ydot,weight\n1,2,3,4,0\n".as_bytes()),
        Err(Error::Parse { .. })
    ));
    assert!(parse_samples("x,y,xdot,ydot\n1,2,3,inf\n".as_bytes()).is_err());
}

#[test]
fn samples_round_trip_exactly() {
    let values = vec![
        vec![0.1, -2.5e-7, 3.0, 1.0 / 3.0],
        vec![std::f64::consts::PI, 1e300, -0.0, 42.0],
        vec![-1.25, 7.0, 2.0f64.sqrt(), 1e-300],
    ];
    let set = WeightedSampleSet::new(values, vec![0.2, 0.7, 0.1]).unwrap();
    let mut buf = Vec::new();
    write_samples(&mut buf, SampleLayout::Planar, &set).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("# rkhs-cc samples v1: x,y,xdot,ydot,weight\nx,y,xdot,ydot,weight\n"));
    let back = parse_samples(buf.as_slice()).unwrap();
    assert_eq!(back.layout, SampleLayout::Planar);
    assert_eq!(back.set.values(), set.values());
    let total: f64 = set.weights().iter().sum();
    for (a, b) in back.set.weights().iter().zip(set.weights()) {
        assert_eq!(*a, b / total);
    }
}

#[test]
fn snapshot_layout() {
    let emb = WeightedSampleSet::new(vec![3.0, 1.0, 2.0], vec![0.5, 0.25, 0.25]).unwrap();
    let des = WeightedSampleSet::new(vec![1.0, 0.0], vec![0.4, 0.6]).unwrap();
    let mut buf = Vec::new();
    write_distribution_snapshot(&mut buf, &emb, &des, true).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# rkhs-cc distribution snapshot v1: value,weight,which");
    assert_eq!(lines[1], "value,weight,which");
    assert_eq!(lines.len(), 2 + 5);
    // ties keep embedded before desired
    assert_eq!(
        &lines[2..],
        &[
            "0.0,0.6,desired",
            "1.0,0.25,embedded",
            "1.0,0.4,desired",
            "2.0,0.25,embedded",
            "3.0,0.5,embedded"
        ]
    );

    let mut buf = Vec::new();
    write_distribution_snapshot(&mut buf, &emb, &des, false).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows[0], "3.0,0.5,embedded");
    assert_eq!(rows[4], "0.0,0.6,desired");
}

#[test]
fn holdout_layouts() {
    let src = "x,y,xdot,ydot,o1_x,o1_y,o1_xdot,o1_ydot,o2_x,o2_y,o2_xdot,o2_ydot\n0,0,1,0,4,-4,0,1,9,9,0,0\n";
    match parse_holdout(src.as_bytes()).unwrap() {
        Holdout::Planar { robot, obstacles } => {
            assert_eq!(robot, vec![vec![0.0, 0.0, 1.0, 0.0]]);
            assert_eq!(obstacles.len(), 2);
            assert_eq!(obstacles[1][0], vec![9.0, 9.0, 0.0, 0.0]);
        }
        other => panic!("{other:?}"),
    }
    assert!(parse_holdout("x,y,xdot,ydot\n0,0,0,0\n".as_bytes()).is_err());
    assert!(matches!(
        parse_holdout("q1,q2,q1dot,q2dot\n0,1,2,3\n".as_bytes()).unwrap(),
        Holdout::Joint { .. }
    ));
}

#[test]
fn config_errors_carry_line_numbers() {
    let good = collision_toml("[0]", SHAPED, CROSSING, 1000);
    assert!(ExperimentConfig::parse(&good).is_ok());
    let bad = good.replace("rho2 = 1.0", "rho2 = \"one\"");
    let line = good.lines().position(|l| l.starts_with("rho2")).unwrap() + 1;
    match ExperimentConfig::parse(&bad) {
        Err(Error::Parse { line: l, .. }) => assert_eq!(l, line),
        other => panic!("{other:?}"),
    }
    let bad = good.replace("degree = 3", "degree = 0");
    assert!(matches!(ExperimentConfig::parse(&bad), Err(Error::Config(_))));
}

#[test]
fn solve_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &collision_toml("[0, 1, 2]", SHAPED, CROSSING, 5000),
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&["solve", "--config", s(&cfg), "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ra = std::fs::read(a.join("report.csv")).unwrap();
    let rb = std::fs::read(b.join("report.csv")).unwrap();
    assert_eq!(ra, rb);
    let rows = parse_report(ra.as_slice()).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![0, 1, 2]);
    for entry in std::fs::read_dir(&a).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "csv") {
            assert_schema_line(&p);
        }
    }

    let one = dir.path().join("one");
    let o = run(&["solve", "--config", s(&cfg), "--seed", "1", "--out", s(&one)]);
    assert!(o.status.success());
    let single = parse_report(std::fs::File::open(one.join("report.csv")).unwrap()).unwrap();
    assert_eq!(single.len(), 1);
    assert_eq!(single[0].u_star, rows[1].u_star);

    let serial = dir.path().join("serial");
    let o = Command::new(BIN)
        .env("RKHS_CC_THREADS", "1")
        .args(["solve", "--config", s(&cfg), "--out", s(&serial)])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read(serial.join("report.csv")).unwrap(), ra);
}

#[test]
fn zero_noise_clear_path_is_certain() {
    let dir = tempfile::tempdir().unwrap();
    let none = "{ position_std = 0.0, velocity_std = 0.0 }";
    let clear = "{ position = [4.0, 5.0], velocity = [0.0, 1.0], radius = 0.5 }";
    let cfg = write_config(dir.path(), "z.toml", &collision_toml("[0, 1]", none, clear, 1000));
    let out = dir.path().join("o");
    let o = run(&["solve", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for r in parse_report(std::fs::File::open(out.join("report.csv")).unwrap()).unwrap() {
        assert_eq!(r.empirical_eta, Some(1.0));
        assert!((r.u_star[0] - 1.0).abs() < 1e-3, "{:?}", r.u_star);
    }
}

#[test]
fn sweep_over_degree() {
    let dir = tempfile::tempdir().unwrap();
    let seeds = format!("{:?}", (0..10).collect::<Vec<u64>>());
    let cfg = write_config(dir.path(), "s.toml", &collision_toml(&seeds, SHAPED, CROSSING, 20000));
    let out = dir.path().join("sw");
    let o = run(&["sweep", "--config", s(&cfg), "--param", "d=2,3,5", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_schema_line(&out.join("report.csv"));
    assert_schema_line(&out.join("summary.csv"));
    let rows = parse_report(std::fs::File::open(out.join("report.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 30);
    let text = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(body.len(), 3);
    let etas: Vec<f64> = body
        .iter()
        .map(|l| l.split(',').nth(7).unwrap().parse().unwrap())
        .collect();
    assert!(body[0].starts_with("d=2,"));
    assert!(etas.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{etas:?}");

    let o = run(&["sweep", "--config", s(&cfg), "--param", "d", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_recounts_on_holdout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "v.toml", &collision_toml("[0]", SHAPED, CROSSING, 1000));
    let out = dir.path().join("o");
    assert!(run(&["solve", "--config", s(&cfg), "--out", s(&out)]).status.success());
    let report = out.join("report.csv");

    // static obstacle dead ahead once, off to the side three times
    let mut text = String::from("x,y,xdot,ydot,o1_x,o1_y,o1_xdot,o1_ydot\n");
    text.push_str("0,0,1,0,2,0,0,0\n");
    for _ in 0..3 {
        text.push_str("0,0,1,0,0,50,0,0\n");
    }
    let holdout = write_config(dir.path(), "h.csv", &text);
    let updated = dir.path().join("r2.csv");
    let o = run(&[
        "validate",
        "--report",
        s(&report),
        "--holdout",
        s(&holdout),
        "--config",
        s(&cfg),
        "--out",
        s(&updated),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_schema_line(&updated);
    let rows = parse_report(std::fs::File::open(&updated).unwrap()).unwrap();
    assert_eq!(rows[0].n_holdout, 4);
    assert_eq!(rows[0].empirical_eta, Some(0.75));

    let joint = write_config(dir.path(), "j.csv", "q1,q2,q1dot,q2dot\n0,0,0,0\n");
    let o = run(&[
        "validate",
        "--report",
        s(&report),
        "--holdout",
        s(&joint),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reduce_writes_weighted_subset() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("x,y,xdot,ydot\n");
    for i in 0..60 {
        let t = i as f64 * 0.37;
        text.push_str(&format!(
            "{},{},{},{}\n",
            t.sin(),
            t.cos(),
            (2.0 * t).sin() * 0.1,
            0.5 + 0.01 * i as f64
        ));
    }
    let full = write_config(dir.path(), "full.csv", &text);
    let out = dir.path().join("red.csv");
    let o = run(&[
        "reduce",
        "--full",
        s(&full),
        "--n",
        "12",
        "--seed",
        "3",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("60 -> 12"));
    assert_schema_line(&out);
    let red = parse_samples(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(red.set.len(), 12);
    let sum: f64 = red.set.weights().iter().sum();
    assert!((sum - 1.0).abs() < 1e-9);
    let source = parse_samples(text.as_bytes()).unwrap();
    for v in red.set.values() {
        assert!(source.set.values().contains(v));
    }

    let o = run(&["reduce", "--full", s(&full), "--n", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_subcommand_passes() {
    let o = run(&["oracle"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}");
    assert!(!stdout.is_empty());
    for line in stdout.lines() {
        assert!(line.starts_with("PASS "), "{line}");
    }
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        "application = \"collision-single\"\nseeds = [0\n",
    );
    let o = run(&["solve", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error:"), "{err}");
    assert!(err.contains("line"), "{err}");

    let o = run(&["solve", "--config", s(&dir.path().join("missing.toml"))]);
    assert_eq!(o.status.code(), Some(2));
}
