use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::bench::records::ResultRecord;
use crate::designs::DesignKind;
use crate::error::{KivError, Result};

/// Quantile by linear interpolation between order statistics
/// (`h = (n - 1) p`, Hyndman-Fan type 7). `sorted` must be ascending.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Distribution of `log10_mse` over the successful replications of a cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub design: DesignKind,
    pub estimator: String,
    pub n_total: usize,
    pub rho: Option<f64>,
    pub count: usize,
    pub errors: usize,
    pub median: Option<f64>,
    pub mean: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub iqr: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spread {
    pub median: f64,
    pub mean: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Result<Spread> {
        if values.is_empty() {
            return Err(KivError::EmptyInput("summary values"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KivError::NonFinite("summary values"));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(Spread {
            median: quantile(&v, 0.5),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            q1: quantile(&v, 0.25),
            q3: quantile(&v, 0.75),
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

pub fn median(values: &[f64]) -> Result<f64> {
    Ok(Spread::of(values)?.median)
}

/// One summary row per (design, estimator, size, rho) cell, in record order.
pub fn summarize(records: &[ResultRecord]) -> Result<Vec<CellSummary>> {
    if records.is_empty() {
        return Err(KivError::EmptyInput("results"));
    }
    let mut cells: BTreeMap<_, (ResultRecord, Vec<f64>, usize)> = BTreeMap::new();
    for r in records {
        let entry = cells.entry(r.sort_key_without_replication()).or_insert_with(|| (r.clone(), Vec::new(), 0));
        match r.log10_mse {
            Some(v) => entry.1.push(v),
            None => entry.2 += 1,
        }
    }
    cells
        .into_values()
        .map(|(r, values, errors)| {
            let spread = if values.is_empty() { None } else { Some(Spread::of(&values)?) };
            Ok(CellSummary {
                design: r.design,
                estimator: r.estimator,
                n_total: r.n_total,
                rho: r.rho,
                count: values.len(),
                errors,
                median: spread.map(|s| s.median),
                mean: spread.map(|s| s.mean),
                q1: spread.map(|s| s.q1),
                q3: spread.map(|s| s.q3),
                iqr: spread.map(|s| s.iqr()),
            })
        })
        .collect()
}

impl ResultRecord {
    fn sort_key_without_replication(&self) -> (&'static str, String, usize, u64) {
        let k = self.sort_key();
        (k.0, k.1.to_string(), k.2, k.3)
    }
}

pub fn write_summary_csv<W: Write>(summary: &[CellSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in summary {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format plot series: `x` is the sample size and `y` one replication's
/// `log10_mse`, grouped by design, rho and estimator.
pub fn write_series_csv<W: Write>(records: &[ResultRecord], out: W) -> Result<()> {
    #[derive(Serialize)]
    struct Point<'a> {
        design: DesignKind,
        rho: Option<f64>,
        estimator: &'a str,
        x: usize,
        y: f64,
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["design", "rho", "estimator", "x", "y"])?;
    for r in records {
        if let Some(y) = r.log10_mse {
            w.serialize(Point {
                design: r.design,
                rho: r.rho,
                estimator: &r.estimator,
                x: r.n_total,
                y,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width table for terminals.
pub fn format_table(summary: &[CellSummary]) -> String {
    let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    let mut s = format!(
        "{:<8} {:<12} {:>7} {:>5} {:>4} {:>4} {:>8} {:>8} {:>8}\n",
        "design", "estimator", "n_total", "rho", "ok", "err", "median", "mean", "iqr"
    );
    for c in summary {
        s.push_str(&format!(
            "{:<8} {:<12} {:>7} {:>5} {:>4} {:>4} {:>8} {:>8} {:>8}\n",
            c.design.name(),
            c.estimator,
            c.n_total,
            c.rho.map_or_else(|| "-".to_string(), |r| r.to_string()),
            c.count,
            c.errors,
            f(c.median),
            f(c.mean),
            f(c.iqr)
        ));
    }
    s
}
