use std::io::Write;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use haarlab::report::ExperimentReport;
use haarlab::runs::{
    run_bad_weight, run_complexity_separation, run_czd_demo, run_sparse_domination,
    run_sparse_failure, run_weak_type, run_weight_suite, MeasureArg,
};

#[derive(Parser)]
#[command(
    name = "haarlab",
    about = "Dyadic harmonic analysis laboratory for balanced measures",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Measure: lmp | uniform | random | path to a JSON measure spec
    #[arg(long, global = true, default_value = "lmp")]
    measure: String,

    /// Depth bound of the measure tree
    #[arg(long, global = true, default_value_t = 24)]
    depth: u32,

    /// Ladder length for the counterexample runs
    #[arg(long, global = true, default_value_t = 64)]
    jmax: u32,

    /// Ladder length for the weighted counterexample
    #[arg(long, global = true, default_value_t = 10)]
    kmax: u32,

    /// Shift token: hilbert | hilbert-adjoint | ll2 | multiplier:+- |
    /// random:S:T:SEED | maximal:N
    #[arg(long, global = true, default_value = "hilbert")]
    shift: String,

    /// Lebesgue exponent
    #[arg(long, global = true, default_value_t = 2.0)]
    p: f64,

    /// Complexity parameter of forms and maximal operators
    #[arg(long, global = true, default_value_t = 1, id = "N")]
    n: u32,

    #[arg(long, global = true, default_value_t = 100)]
    trials: u32,

    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,

    /// Split-fraction floor for random measures
    #[arg(long, global = true, default_value_t = 0.25)]
    theta: f64,

    #[arg(long, global = true, value_enum, default_value_t = Mode::Float)]
    mode: Mode,

    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Json)]
    out: OutFormat,

    /// Write the report here instead of stdout
    #[arg(long, global = true)]
    output: Option<std::path::PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Mode {
    Float,
    Rational,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Classical sparse domination failure ladder
    SparseFailure,
    /// Weighted unboundedness ladder with characteristic scans
    BadWeight,
    /// Complexity separation of the grandchild shift
    ComplexitySeparation,
    /// Sparse domination of a shift or maximal operator on random data
    SparseDomination,
    /// Weight class characteristics and weighted bounds
    WeightSuite,
    /// Weak-type diagnostics for maximal operators and the shift
    WeakType,
    /// Calderon-Zygmund decomposition suite
    CzdDemo,
}

fn run(cli: &Cli) -> Result<ExperimentReport> {
    let measure = MeasureArg::parse(&cli.measure, cli.seed ^ 0x5eed, cli.theta)
        .context("resolving the measure argument")?;
    let report = match cli.command {
        Command::SparseFailure => run_sparse_failure(cli.jmax)?,
        Command::BadWeight => run_bad_weight(cli.kmax)?,
        Command::ComplexitySeparation => run_complexity_separation(cli.jmax)?,
        Command::SparseDomination => {
            run_sparse_domination(&measure, cli.depth, &cli.shift, cli.trials, cli.seed)?
        }
        Command::WeightSuite => {
            run_weight_suite(&measure, cli.depth, cli.p, cli.n, cli.trials, cli.seed)?
        }
        Command::WeakType => run_weak_type(&measure, cli.depth, cli.trials, cli.seed)?,
        Command::CzdDemo => run_czd_demo(
            &measure,
            cli.depth,
            cli.trials,
            cli.seed,
            cli.mode == Mode::Rational,
        )?,
    };
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let report = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let rendered = match cli.out {
        OutFormat::Json => report.to_json(),
        OutFormat::Csv => report.to_csv(),
    };
    match &cli.output {
        Some(path) => {
            if let Err(e) = std::fs::write(path, rendered.as_bytes()) {
                eprintln!("error writing {}: {e}", path.display());
                return ExitCode::from(2);
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(rendered.as_bytes());
            let _ = stdout.write_all(b"\n");
        }
    }
    eprint!("{}", report.render_text());
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
