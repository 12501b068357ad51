use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::designs::DesignKind;
use crate::error::Result;

/// Column order of the results file.
pub const CSV_HEADER: [&str; 13] = [
    "design",
    "estimator",
    "n_total",
    "split_ratio",
    "rho",
    "replication",
    "seed",
    "lambda",
    "xi",
    "mse",
    "log10_mse",
    "wall_ms",
    "jitter_flag",
];

/// One estimator run on one replication.
///
/// `lambda` holds the ridge penalty for kernel ridge regression. A failed run
/// has no `mse`; its message is kept in [`BenchmarkResult::errors`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub design: DesignKind,
    pub estimator: String,
    pub n_total: usize,
    pub split_ratio: f64,
    /// Only the demand design has a confounding parameter.
    pub rho: Option<f64>,
    pub replication: usize,
    pub seed: u64,
    pub lambda: Option<f64>,
    pub xi: Option<f64>,
    pub mse: Option<f64>,
    pub log10_mse: Option<f64>,
    pub wall_ms: u64,
    pub jitter_flag: bool,
}

impl ResultRecord {
    pub fn is_error(&self) -> bool {
        self.mse.is_none()
    }

    pub(crate) fn sort_key(&self) -> (&'static str, &str, usize, u64, usize) {
        let rho = self.rho.map_or(0, f64::to_bits);
        (self.design.name(), &self.estimator, self.n_total, rho, self.replication)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub design: DesignKind,
    pub estimator: String,
    pub n_total: usize,
    pub replication: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchmarkResult {
    /// Sorted by design, estimator, sample size, rho and replication.
    pub records: Vec<ResultRecord>,
    pub errors: Vec<ErrorRecord>,
    /// Median-heuristic fallbacks and similar non-fatal events.
    pub warnings: Vec<String>,
}

impl BenchmarkResult {
    pub fn has_errors(&self) -> bool {
        !self.errors.is_empty() || self.records.iter().any(ResultRecord::is_error)
    }

    pub fn sort(&mut self) {
        self.records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        self.errors.sort_by(|a, b| {
            (a.design.name(), &a.estimator, a.n_total, a.replication).cmp(&(
                b.design.name(),
                &b.estimator,
                b.n_total,
                b.replication,
            ))
        });
    }

    pub fn extend(&mut self, other: BenchmarkResult) {
        self.records.extend(other.records);
        self.errors.extend(other.errors);
        self.warnings.extend(other.warnings);
        self.sort();
    }

    /// Records whose estimator label matches exactly.
    pub fn log10_mses(&self, design: DesignKind, estimator: &str, n_total: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.design == design && r.estimator == estimator && r.n_total == n_total)
            .filter_map(|r| r.log10_mse)
            .collect()
    }
}

pub fn write_csv<W: Write>(records: &[ResultRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(crate::error::KivError::InvalidSpec(format!(
            "unexpected results header {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_csv_file(records: &[ResultRecord], path: &Path) -> Result<()> {
    write_csv(records, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn read_csv_file(path: &Path) -> Result<Vec<ResultRecord>> {
    read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
}
