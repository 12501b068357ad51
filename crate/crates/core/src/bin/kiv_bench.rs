//! `kiv-bench`: benchmark sweeps, the lengthscale robustness study, and
//! summaries of existing result files.
//!
//! Exits with status 2 if any estimator run failed, 1 on usage or I/O errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use kernel_iv::bench::{
    format_table, read_csv_file, robustness_study, run_sweep, summarize, write_outputs, write_summaries,
    BenchmarkResult, EstimatorKind, RobustnessConfig, RunConfig,
};
use kernel_iv::designs::{DesignKind, DesignSpec, DEFAULT_RHO};
use kernel_iv::iv::TuningPolicy;

#[derive(Parser)]
#[command(name = "kiv-bench", version, about = "Kernel IV regression benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run estimators over designs, sample sizes and replications.
    Sweep(SweepArgs),
    /// KIV on the sigmoid design under fixed input lengthscales.
    Robustness(RobustnessArgs),
    /// Summarize an existing results.csv.
    Summarize(SummarizeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Tuning {
    Grid,
    Rate,
}

#[derive(Args)]
struct TuningArgs {
    #[arg(long, value_enum, default_value = "grid")]
    tuning: Tuning,
    /// Stage-1 smoothness exponent for `--tuning rate`, in (1, 2].
    #[arg(long, default_value_t = 2.0)]
    c1: f64,
    /// Eigenvalue decay exponent for `--tuning rate`, > 1.
    #[arg(long, default_value_t = 2.0)]
    b: f64,
    /// Stage-2 smoothness exponent for `--tuning rate`, in (1, 2].
    #[arg(long, default_value_t = 2.0)]
    c: f64,
}

impl TuningArgs {
    fn policy(&self) -> TuningPolicy {
        match self.tuning {
            Tuning::Grid => TuningPolicy::default_grid(),
            Tuning::Rate => TuningPolicy::TheoreticalRate { c1: self.c1, b: self.b, c: self.c },
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    design: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "kiv,krr,twosls,sieve")]
    estimators: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    n_total: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    split_ratio: f64,
    #[arg(long, default_value_t = 40)]
    reps: usize,
    /// Demand confounding strength; several values sweep it.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    rho: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Fixed Gaussian lengthscale for the input kernel.
    #[arg(long)]
    lengthscale: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (0: one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct RobustnessArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.4,0.6,0.8,1.0")]
    lengthscale: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    n_total: usize,
    #[arg(long, default_value_t = 0.5)]
    split_ratio: f64,
    #[arg(long, default_value_t = 40)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    tuning: TuningArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct SummarizeArgs {
    /// A results.csv written by `sweep` or `robustness`.
    #[arg(long)]
    input: PathBuf,
    /// Directory for summary.csv and series.csv; defaults to the input's.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_all<T: std::str::FromStr<Err = kernel_iv::KivError>>(values: &[String]) -> kernel_iv::Result<Vec<T>> {
    values.iter().map(|v| v.trim().parse()).collect()
}

fn sweep(args: SweepArgs) -> kernel_iv::Result<BenchmarkResult> {
    let kinds: Vec<DesignKind> = parse_all(&args.design)?;
    let mut designs = Vec::new();
    for kind in kinds {
        let rhos: &[f64] = if kind == DesignKind::Demand { &args.rho } else { &[DEFAULT_RHO] };
        for &rho in rhos {
            designs.push(DesignSpec::new(kind, 0, 0).with_rho(rho).with_split_ratio(args.split_ratio));
        }
    }
    let config = RunConfig::new(designs, parse_all::<EstimatorKind>(&args.estimators)?, args.n_total)
        .with_replications(args.reps)
        .with_seed(args.seed)
        .with_tuning(args.tuning.policy())
        .with_lengthscale(args.lengthscale)
        .with_jobs(args.jobs);
    let result = run_sweep(&config)?;
    write_outputs(&args.out, std::slice::from_ref(&config), &result)?;
    Ok(result)
}

fn robustness(args: RobustnessArgs) -> kernel_iv::Result<BenchmarkResult> {
    let config = RobustnessConfig {
        lengthscales: args.lengthscale,
        sample_size: args.n_total,
        split_ratio: args.split_ratio,
        replications: args.reps,
        tuning: args.tuning.policy(),
        base_seed: args.seed,
        jobs: args.jobs,
    };
    let result = robustness_study(&config)?;
    write_outputs(&args.out, &config.sweeps(), &result)?;
    Ok(result)
}

fn report(result: &BenchmarkResult) -> kernel_iv::Result<ExitCode> {
    print!("{}", format_table(&summarize(&result.records)?));
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    for e in &result.errors {
        eprintln!(
            "error: {} {} n_total={} replication={} seed={}: {}",
            e.design, e.estimator, e.n_total, e.replication, e.seed, e.message
        );
    }
    Ok(if result.has_errors() { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn run(cli: Cli) -> kernel_iv::Result<ExitCode> {
    match cli.command {
        Command::Sweep(args) => report(&sweep(args)?),
        Command::Robustness(args) => report(&robustness(args)?),
        Command::Summarize(args) => {
            let records = read_csv_file(&args.input)?;
            let dir = args
                .out
                .unwrap_or_else(|| args.input.parent().map(PathBuf::from).unwrap_or_default());
            write_summaries(&dir, &records)?;
            report(&BenchmarkResult {
                records,
                ..BenchmarkResult::default()
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("kiv-bench: {e}");
            ExitCode::from(1)
        }
    }
}
