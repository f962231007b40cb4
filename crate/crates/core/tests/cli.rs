use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rieszboost::data::{load_csv, save_csv, CsvSchema};
use rieszboost::riesz::Functional;
use rieszboost::sim::{rng_from_seed, true_alpha, Dgp};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rieszboost"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn last_number(s: &str) -> f64 {
    s.split_whitespace().last().unwrap().parse().unwrap()
}

const SMALL_GRID: [&str; 6] = [
    "--learning-rates",
    "0.1",
    "--n-iterations",
    "50,100",
    "--max-depths",
    "3",
];

#[test]
fn truth_command() {
    let o = run(&[
        "truth",
        "--dgp",
        "binary",
        "--functional",
        "ate",
        "--mode",
        "closed-form",
    ]);
    assert!(o.status.success());
    assert_eq!(last_number(&stdout(&o)), 29.5);

    let o = run(&[
        "truth",
        "--dgp",
        "continuous",
        "--functional",
        "ase",
        "--delta",
        "1",
        "--mode",
        "closed-form",
    ]);
    assert!((last_number(&stdout(&o)) - 109.0).abs() < 1e-9);

    let o = run(&[
        "truth",
        "--dgp",
        "binary",
        "--functional",
        "att",
        "--mode",
        "quadrature",
    ]);
    assert!((last_number(&stdout(&o)) - 30.786).abs() < 0.01);

    let o = run(&["truth", "--dgp", "binary", "--functional", "lase", "--delta", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not defined"));

    let o = run(&["truth", "--dgp", "nowhere", "--functional", "ate"]);
    assert_eq!(o.status.code(), Some(2));
}

fn write_binary_data(dir: &Path, n: usize, seed: u64) -> String {
    let d = Dgp::Binary.draw(n, &mut rng_from_seed(seed));
    let path = dir.join("binary.csv");
    save_csv(&d, &path).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn estimate_command() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_binary_data(dir.path(), 1000, 17);
    let out1 = dir.path().join("e1.csv");
    let out2 = dir.path().join("e2.csv");
    // Default (full) tuning grid.
    let args = vec!["estimate", "--data", &data, "--functional", "ate", "--seed", "4"];
    let o = run(&[&args[..], &["--out", out1.to_str().unwrap()]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    let nums: Vec<f64> = line
        .replace(['[', ']', ','], " ")
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();
    // One replication: the estimate lies within three standard errors of the truth.
    let se = (nums[2] - nums[1]) / (2.0 * 1.96);
    assert!(nums[1] < nums[0] && nums[0] < nums[2], "{line}");
    assert!((nums[0] - 29.5).abs() < 3.0 * se, "{line}");

    let o = run(&[&args[..], &["--out", out2.to_str().unwrap()]].concat());
    assert!(o.status.success());
    assert_eq!(fs::read(&out1).unwrap(), fs::read(&out2).unwrap());

    let o = run(&["estimate", "--data", &data, "--functional", "ase"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("delta"));

    let o = run(&["estimate", "--data", "/nonexistent.csv", "--functional", "ate"]);
    assert_eq!(o.status.code(), Some(1));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "y,a,x1\n1,0,0.5\n2,oops,0.1\n").unwrap();
    let o = run(&["estimate", "--data", bad.to_str().unwrap(), "--functional", "ate"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("row 2") && err.contains("`a`"), "{err}");
}

#[test]
fn simulate_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.conf");
    fs::write(
        &cfg,
        "dgp = binary\nn = 200\nn_sims = 2\ngrid.learning_rates = 0.1\ngrid.n_iterations = 20\ngrid.max_depths = 2\ncv.folds = 3\n",
    )
    .unwrap();
    let o = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("binary_report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert!(lines[0].starts_with("method,functional,avg_estimate"));
    assert_eq!(lines.len(), 5);
    assert!(lines[1].contains(",2,200,0"));
    let records = fs::read_to_string(dir.path().join("binary_records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 2 * 4);

    // The same study on one thread writes the same report.
    let other = dir.path().join("one");
    fs::create_dir(&other).unwrap();
    let o = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        other.to_str().unwrap(),
        "--jobs",
        "1",
    ]);
    assert!(o.status.success());
    assert_eq!(report, fs::read_to_string(other.join("binary_report.csv")).unwrap());

    let bad = dir.path().join("bad.conf");
    fs::write(&bad, "dgp = binary\ngrid.learning_rate = 0.1\n").unwrap();
    let o = run(&["simulate", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("grid.learning_rate"));
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["binary.conf", "continuous.conf"] {
        let c = rieszboost::config::RunConfig::from_file(root.join(name)).unwrap();
        assert_eq!((c.n, c.n_sims, c.split_fraction, c.cv_folds), (1000, 500, 0.5, 5));
        assert_eq!(c.estimator().unwrap().grid.len(), 84);
    }
}

#[test]
fn representer_curve_command() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_binary_data(dir.path(), 400, 3);
    let out = dir.path().join("curve.csv");
    let mut args = vec![
        "representer-curve",
        "--data",
        &data,
        "--functional",
        "ate",
        "--dgp",
        "binary",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend(SMALL_GRID);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "a,x,alpha_hat,alpha_true");
    assert_eq!(lines.len(), 1 + 202);
    for l in &lines[1..] {
        let v: Vec<f64> = l.split(',').map(|t| t.parse().unwrap()).collect();
        assert!(v[2].is_finite());
        let expected = true_alpha(Dgp::Binary, &Functional::Ate, v[0], v[1]).unwrap();
        assert!((v[3] - expected).abs() < 1e-12);
    }
    let schema = CsvSchema {
        outcome: "alpha_hat".into(),
        treatment: "a".into(),
        covariates: vec!["x".into(), "alpha_true".into()],
    };
    assert_eq!(load_csv(&out, &schema).unwrap().n(), 202);
}
