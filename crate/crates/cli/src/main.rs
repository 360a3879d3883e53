use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use funnystrom::experiments::{
    counterexample_checks, expectation_bound_estimate, frobenius_trend_violations, function_suite, open_cell_survey,
    ordering_violations, remark_suite, run_experiment, theorem_suite, to_csv, ExperimentConfig, Scale, SuiteReport,
    ORDERING_TOL,
};
use funnystrom::metrics::{ErrorContext, Metric, ReportMeta};
use funnystrom::mmio::{fmt_f64, read_matrix_market, write_matrix_market, Layout, Symmetry};
use funnystrom::nystrom::nystrom_factor;
use funnystrom::sketch::{build_basis, OrthonormalBasis, Scheme, SketchConfig};
use funnystrom::{Error, ScalarFunction, SpsdMatrix};

#[derive(Parser)]
#[command(
    name = "funnystrom",
    version,
    about = "Truncated Nyström and funNyström approximations of SPSD matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Approximate a Matrix Market matrix and report the three ε errors.
    Approx(ApproxArgs),
    /// Run a randomized verification suite.
    Verify(VerifyArgs),
    /// Run a parameter sweep from a JSON config and write CSV.
    Experiment(ExperimentArgs),
    /// Recompute the published counterexamples and constants.
    Counterexamples,
}

#[derive(clap::Args)]
struct ApproxArgs {
    /// Symmetric real Matrix Market file (array or coordinate).
    matrix: PathBuf,
    /// gaussian | subspace_iteration | block_krylov | rpcholesky |
    /// explicit-identity | explicit:i,j,... (1-based columns of the identity)
    #[arg(long, default_value = "gaussian")]
    basis: String,
    /// Matrix Market file holding explicit basis columns; overrides --basis.
    #[arg(long)]
    basis_file: Option<PathBuf>,
    #[arg(long)]
    k: usize,
    /// Sketch width; defaults to k (n for explicit-identity).
    #[arg(long)]
    ell: Option<usize>,
    #[arg(long, default_value_t = 0)]
    q: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `name` or `name:key=value,...`, e.g. `ridge:lambda=2`.
    #[arg(long, default_value = "sqrt")]
    function: String,
    /// Comma-separated: nuclear, frobenius, operator, schatten<p>, eigenvalue.
    #[arg(long, default_value = "nuclear,frobenius,operator,eigenvalue")]
    norms: String,
    /// Directory receiving u_hat.mtx, lambda_hat.csv and report.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Theorems,
    Remarks,
    Functions,
}

#[derive(clap::Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    suite: Suite,
    #[arg(long, default_value_t = 200)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// desk runs synthetic generators at the config's desk_n (default 300).
    #[arg(long, default_value = "paper")]
    scale: String,
    /// Overrides the config's repetition count.
    #[arg(long)]
    reps: Option<usize>,
}

enum Failure {
    Usage(String),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::MismatchWithPaper { .. } => Failure::Verification(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Usage(
        Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
        .to_string(),
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match std::env::var("NYSTROM_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) => t,
            Err(_) => {
                eprintln!("error: NYSTROM_THREADS must be a non-negative integer, got {v:?}");
                return ExitCode::from(2);
            }
        },
        Err(_) => 0,
    };
    if let Err(e) = funnystrom::configure_threads(threads) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Approx(a) => approx(a),
        Command::Verify(v) => verify(v),
        Command::Experiment(e) => experiment(e),
        Command::Counterexamples => counterexamples(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn parse_metrics(s: &str) -> Result<Vec<Metric>, Error> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| Metric::parse(t.trim()))
        .collect()
}

fn basis_for(a: &SpsdMatrix, args: &ApproxArgs) -> Result<OrthonormalBasis, Error> {
    let n = a.n();
    if let Some(path) = &args.basis_file {
        let cols = read_matrix_market(path)?;
        if cols.nrows() != n {
            return Err(Error::DimensionMismatch {
                left: n,
                right: cols.nrows(),
            });
        }
        return OrthonormalBasis::explicit(cols);
    }
    let spec = args.basis.trim();
    if spec == "explicit-identity" {
        let ell = args.ell.unwrap_or(n);
        if ell > n {
            return Err(Error::RankOutOfRange { k: ell, max: n });
        }
        return OrthonormalBasis::standard_columns(n, &(0..ell).collect::<Vec<_>>());
    }
    if let Some(list) = spec.strip_prefix("explicit:") {
        let idx = list
            .split(',')
            .map(|t| match t.trim().parse::<usize>() {
                Ok(i) if i >= 1 => Ok(i - 1),
                _ => Err(Error::InvalidConfig(format!("bad column index {t:?} (1-based)"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        return OrthonormalBasis::standard_columns(n, &idx);
    }
    let scheme = Scheme::parse(spec)?;
    let cfg = SketchConfig::new(args.k, args.ell.unwrap_or(args.k), args.q, args.seed)?;
    build_basis(a, scheme, &cfg)
}

fn approx(args: ApproxArgs) -> CliResult {
    let a = SpsdMatrix::new(read_matrix_market(&args.matrix)?)?;
    let f = ScalarFunction::parse(&args.function)?;
    let metrics = parse_metrics(&args.norms)?;
    if metrics.is_empty() {
        return Err(Failure::Usage("--norms lists no metric".into()));
    }
    if args.k == 0 || args.k > a.n() {
        return Err(Error::RankOutOfRange { k: args.k, max: a.n() }.into());
    }
    let basis = basis_for(&a, &args)?;
    let meta = ReportMeta {
        scheme: basis.provenance.scheme.name().into(),
        n: a.n(),
        k: args.k,
        ell: basis.ell(),
        q: basis.provenance.q,
        seed: basis.provenance.seed,
        function: f.name(),
    };
    let rows = ErrorContext::new(&a, &f)?.reports(&basis, args.k, &metrics, &meta)?;
    let csv = to_csv(&rows);
    print!("{csv}");

    if let Some(dir) = &args.out {
        let k = args.k.min(basis.ell());
        let factor = nystrom_factor(&a, &basis)?.truncate(k)?;
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        write_matrix_market(&dir.join("u_hat.mtx"), factor.u_hat(), Layout::Array, Symmetry::General)?;
        let mut lam = String::from("index,lambda_hat,f_lambda_hat\n");
        for (i, &l) in factor.lambda_hat().iter().enumerate() {
            lam.push_str(&format!("{},{},{}\n", i + 1, fmt_f64(l), fmt_f64(f.eval(l.max(0.0)))));
        }
        let path = dir.join("lambda_hat.csv");
        fs::write(&path, lam).map_err(|e| io_err(&path, e))?;
        let path = dir.join("report.csv");
        fs::write(&path, &csv).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

fn print_suite(report: &SuiteReport) {
    let mut out = std::io::stdout().lock();
    for v in &report.verdicts {
        let _ = writeln!(out, "{}", v.line());
    }
    for (id, (checked, failed, skipped)) in report.tally() {
        let _ = writeln!(out, "# {id}: checked={checked} failed={failed} skipped={skipped}");
    }
}

fn verify(args: VerifyArgs) -> CliResult {
    if args.instances == 0 {
        return Err(Failure::Usage("--instances must be at least 1".into()));
    }
    match args.suite {
        Suite::Theorems | Suite::Remarks => {
            let report = if matches!(args.suite, Suite::Theorems) {
                theorem_suite(args.instances, args.seed)?
            } else {
                remark_suite(args.instances, args.seed)?
            };
            print_suite(&report);
            let failed = report.failures().len();
            if failed > 0 {
                return Err(Failure::Verification(format!("{failed} verdicts do not hold")));
            }
        }
        Suite::Functions => {
            let checks = function_suite(args.instances, args.seed)?;
            for c in &checks {
                println!("{}", c.line());
            }
            let bad = checks.iter().filter(|c| !c.holds()).count();
            if bad > 0 {
                return Err(Failure::Verification(format!(
                    "{bad} functions disagree with the catalogue"
                )));
            }
        }
    }
    Ok(())
}

fn experiment(args: ExperimentArgs) -> CliResult {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(r) = args.reps {
        cfg.repetitions = r;
    }
    let scale = Scale::parse(&args.scale)?;
    let start = Instant::now();
    let rows = run_experiment(&cfg, scale)?;
    let csv = to_csv(&rows);
    match &args.out {
        Some(path) => fs::write(path, &csv).map_err(|e| io_err(path, e))?,
        None => print!("{csv}"),
    }
    eprintln!("{}: {} rows in {:.2?}", cfg.name, rows.len(), start.elapsed());
    let mut problems = ordering_violations(&rows, ORDERING_TOL);
    problems.extend(frobenius_trend_violations(&rows, ORDERING_TOL));
    for p in &problems {
        eprintln!("violation: {p}");
    }
    if !problems.is_empty() {
        return Err(Failure::Verification(format!("{} property violations", problems.len())));
    }
    Ok(())
}

fn counterexamples() -> CliResult {
    let checks = counterexample_checks()?;
    for c in &checks {
        println!("{}", c.line());
    }
    for s in open_cell_survey(2000, 11)? {
        println!(
            "# open cell {}: max ratio {:.6} over {} trials, {} above 1 (informational)",
            s.norm.name(),
            s.max_ratio,
            s.trials,
            s.exceeded
        );
    }
    let e = expectation_bound_estimate(200, 5)?;
    println!("# {} (informational)", e.line());
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.holds)
        .map(|c| c.theorem_id.as_str())
        .collect();
    if !failed.is_empty() {
        return Err(Failure::Verification(format!(
            "mismatch with published values: {}",
            failed.join(", ")
        )));
    }
    Ok(())
}
