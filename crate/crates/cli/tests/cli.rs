use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use funnystrom::experiments::{eq14_matrix, to_csv};
use funnystrom::metrics::{ErrorContext, Metric, ReportMeta};
use funnystrom::mmio::read_matrix_market;
use funnystrom::{NormKind, OrthonormalBasis, ScalarFunction};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_funnystrom"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("{name}.json"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn identity_basis_is_exact() {
    let o = run(bin()
        .arg("approx")
        .arg(fixture("diag3.mtx"))
        .args(["--basis", "explicit-identity", "--k", "3"]));
    assert_eq!(o.status.code(), Some(0));
    let csv = stdout(&o);
    assert_eq!(csv.lines().count(), 5);
    for col in ["eps_projection", "eps_nystrom", "eps_funnystrom"] {
        assert!(column(&csv, col).iter().all(|v| v.abs() < 1e-12), "{col}: {csv}");
    }
}

#[test]
fn eq14_constants_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin()
        .arg("approx")
        .arg(fixture("eq14.mtx"))
        .args(["--basis", "explicit:1,2,3", "--k", "2", "--norms", "operator", "--out"])
        .arg(dir.path()));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = stdout(&o);
    let proj = column(&csv, "eps_projection")[0];
    let nys = column(&csv, "eps_nystrom")[0];
    assert!((proj - 2.59e-8).abs() <= 0.005e-8, "{proj}");
    assert!((nys - 5.75e-3).abs() <= 0.005e-3, "{nys}");

    let a = eq14_matrix().unwrap();
    assert_eq!(
        read_matrix_market(&fixture("eq14.mtx")).unwrap(),
        a.entries().to_owned()
    );
    let q = OrthonormalBasis::standard_columns(5, &[0, 1, 2]).unwrap();
    let meta = ReportMeta {
        scheme: "explicit".into(),
        n: 5,
        k: 2,
        ell: 3,
        q: 0,
        seed: 0,
        function: "sqrt".into(),
    };
    let rows = ErrorContext::new(&a, &ScalarFunction::sqrt())
        .unwrap()
        .reports(&q, 2, &[Metric::Norm(NormKind::Operator)], &meta)
        .unwrap();
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(report, to_csv(&rows));
    assert_eq!(report, csv);

    let u = read_matrix_market(&dir.path().join("u_hat.mtx")).unwrap();
    assert_eq!((u.nrows(), u.ncols()), (5, 2));
    let lam = fs::read_to_string(dir.path().join("lambda_hat.csv")).unwrap();
    assert_eq!(lam.lines().count(), 3);
}

#[test]
fn randomized_basis_is_seeded() {
    let args = ["--basis", "block_krylov", "--k", "2", "--q", "1", "--seed", "9"];
    let a = run(bin().arg("approx").arg(fixture("eq14.mtx")).args(args));
    let b = run(bin().arg("approx").arg(fixture("eq14.mtx")).args(args));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn malformed_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mtx");
    fs::write(&bad, "%%MatrixMarket matrix array real general\n2 2\n1.0\nx\n").unwrap();
    assert_eq!(
        run(bin().arg("approx").arg(&bad).args(["--k", "1"])).status.code(),
        Some(2)
    );
    let o = run(bin().arg("approx").arg(fixture("diag3.mtx")).args(["--k", "4"]));
    assert_eq!(o.status.code(), Some(2));
    let o = run(bin()
        .arg("approx")
        .arg(fixture("diag3.mtx"))
        .args(["--k", "1", "--function", "nope"]));
    assert_eq!(o.status.code(), Some(2));
    let o = run(bin()
        .arg("approx")
        .arg(Path::new("/nonexistent.mtx"))
        .args(["--k", "1"]));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_suites() {
    let o = run(bin().args(["verify", "--suite", "functions", "--instances", "20", "--seed", "3"]));
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.contains("\tPASS")));
    let o = run(bin().args(["verify", "--suite", "remarks", "--instances", "10", "--seed", "3"]));
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = run(bin().args(["verify", "--suite", "theorems", "--instances", "10", "--seed", "3"]));
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = run(bin().args(["verify", "--suite", "theorems", "--instances", "0"]));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn counterexamples_command() {
    let o = run(bin().arg("counterexamples"));
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("ex5.1_nuclear_ratio\tPASS"));
    assert!(!out.lines().any(|l| l.contains("\tFAIL")));
}

#[test]
fn experiment_missing_config_exits_2() {
    let o = run(bin().args(["experiment", "--config", "/nonexistent/config.json"]));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn experiment_indefinite_kernel_exits_2() {
    let o = run(bin()
        .args(["experiment", "--scale", "desk", "--config"])
        .arg(config("fig1")));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("positive semidefinite"));
}

#[test]
fn desk_experiment_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&p1, &p2] {
        let o = run(bin()
            .args(["experiment", "--scale", "desk", "--config"])
            .arg(config("fig3"))
            .arg("--out")
            .arg(p));
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(&p1).unwrap();
    assert_eq!(a, fs::read(&p2).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1 + 7 * 4);
}
