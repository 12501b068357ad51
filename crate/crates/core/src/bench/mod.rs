//! Monte Carlo benchmark sweeps over designs, estimators and sample sizes.
//!
//! A sweep writes four files into its output directory:
//!
//! * `results.csv`: one row per estimator and replication (see [`CSV_HEADER`]);
//! * `results.json`: configuration echo, RNG identity, library version,
//!   error messages and warnings;
//! * `summary.csv`: median, mean and quartiles of `log10_mse` per cell;
//! * `series.csv`: plot-ready `(x = n_total, y = log10_mse)` points.

pub mod config;
pub mod records;
pub mod summary;
pub mod sweep;

use std::path::Path;

use serde::Serialize;

pub use config::{EstimatorKind, RobustnessConfig, RunConfig};
pub use records::{read_csv_file, write_csv_file, BenchmarkResult, ErrorRecord, ResultRecord, CSV_HEADER};
pub use summary::{format_table, median, summarize, CellSummary, Spread};
pub use sweep::{cell_seed, robustness_study, run_estimator, run_sweep};

use crate::designs::RNG_IDENTITY;
use crate::error::Result;
use crate::iv::TuningPolicy;

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSON: &str = "results.json";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SERIES_CSV: &str = "series.csv";

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TuningEcho<'a> {
    GridSearch { lambda_grid: &'a [f64], xi_grid: &'a [f64], refine: bool },
    TheoreticalRate { c1: f64, b: f64, c: f64 },
}

impl<'a> From<&'a TuningPolicy> for TuningEcho<'a> {
    fn from(p: &'a TuningPolicy) -> Self {
        match p {
            TuningPolicy::GridSearch { lambda_grid, xi_grid, refine } => TuningEcho::GridSearch {
                lambda_grid,
                xi_grid,
                refine: *refine,
            },
            TuningPolicy::TheoreticalRate { c1, b, c } => TuningEcho::TheoreticalRate { c1: *c1, b: *b, c: *c },
        }
    }
}

#[derive(Serialize)]
struct SweepEcho<'a> {
    designs: &'a [crate::designs::DesignSpec],
    estimators: &'a [EstimatorKind],
    sample_sizes: &'a [usize],
    replications: usize,
    tuning: TuningEcho<'a>,
    lengthscale_override: Option<f64>,
    base_seed: u64,
}

impl<'a> From<&'a RunConfig> for SweepEcho<'a> {
    fn from(c: &'a RunConfig) -> Self {
        SweepEcho {
            designs: &c.designs,
            estimators: &c.estimators,
            sample_sizes: &c.sample_sizes,
            replications: c.replications,
            tuning: (&c.tuning).into(),
            lengthscale_override: c.lengthscale_override,
            base_seed: c.base_seed,
        }
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    library: &'static str,
    version: &'static str,
    rng: &'static str,
    /// One entry per sweep; the robustness study runs several.
    sweeps: Vec<SweepEcho<'a>>,
    errors: &'a [ErrorRecord],
    warnings: &'a [String],
}

/// Writes the results, sidecar, summary and series files into `dir`.
pub fn write_outputs(dir: &Path, sweeps: &[RunConfig], result: &BenchmarkResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv_file(&result.records, &dir.join(RESULTS_CSV))?;
    let sidecar = Sidecar {
        library: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        rng: RNG_IDENTITY,
        sweeps: sweeps.iter().map(SweepEcho::from).collect(),
        errors: &result.errors,
        warnings: &result.warnings,
    };
    let mut json = serde_json::to_string_pretty(&sidecar)?;
    json.push('\n');
    std::fs::write(dir.join(RESULTS_JSON), json)?;
    write_summaries(dir, &result.records)
}

/// Writes `summary.csv` and `series.csv` for existing records.
pub fn write_summaries(dir: &Path, records: &[ResultRecord]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let table = summarize(records)?;
    summary::write_summary_csv(&table, std::fs::File::create(dir.join(SUMMARY_CSV))?)?;
    summary::write_series_csv(records, std::fs::File::create(dir.join(SERIES_CSV))?)
}
