use std::time::Instant;

use rayon::prelude::*;

use crate::bench::config::{EstimatorKind, RobustnessConfig, RunConfig};
use crate::bench::records::{BenchmarkResult, ErrorRecord, ResultRecord};
use crate::designs::{eval_grid, mse_vs_truth, sample_design, DesignKind, DesignSpec, EvalGrid, GeneratedSample};
use crate::error::{KivError, Result};
use crate::iv::{
    cv2_tune_krr_refined, design_bases, fit_2sls, fit_kiv, fit_krr, fit_sieve_iv, tune, SplitDataset, TuningPolicy,
};
use crate::kernels::{KernelSpec, LengthscaleChoice};
use crate::iv::tuning::{log_grid, DEFAULT_GRID_MAX, DEFAULT_GRID_MIN, DEFAULT_GRID_POINTS};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed shared by every replication of one (design, rho, size) cell;
/// replication `r` uses `cell_seed ^ r`.
pub fn cell_seed(base_seed: u64, design: &DesignSpec, n_total: usize) -> u64 {
    let kind = match design.kind {
        DesignKind::Linear => 1,
        DesignKind::Sigmoid => 2,
        DesignKind::Demand => 3,
    };
    let rho = if design.kind == DesignKind::Demand { design.rho.to_bits() } else { 0 };
    let mut h = splitmix64(base_seed);
    for v in [kind, rho, n_total as u64, design.split_ratio.to_bits()] {
        h = splitmix64(h ^ v);
    }
    // Keep the low bits free so `^ replication` cannot collide across cells
    // for fewer than 2^20 replications.
    h << 20
}

/// Outcome of one estimator on one replication.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorOutcome {
    pub lambda: Option<f64>,
    pub xi: Option<f64>,
    pub predictions: Vec<f64>,
    pub jittered: bool,
    pub lengthscale_warnings: Vec<LengthscaleChoice>,
}

fn input_kernel(points: faer::MatRef<'_, f64>, seed: u64, lengthscale: Option<f64>) -> Result<(KernelSpec, Vec<LengthscaleChoice>)> {
    match lengthscale {
        Some(l) => Ok((KernelSpec::gaussian(vec![l; points.ncols()])?, Vec::new())),
        None => {
            let (k, choices) = KernelSpec::gaussian_median(points, seed)?;
            Ok((k, choices.into_iter().filter(|c| c.fallback).collect()))
        }
    }
}

/// Penalty grid for kernel ridge regression's cross-validation.
pub fn krr_grid() -> Vec<f64> {
    log_grid(DEFAULT_GRID_MIN, DEFAULT_GRID_MAX, DEFAULT_GRID_POINTS)
}

/// Fits one estimator to a generated sample and predicts on `grid`.
///
/// KIV and sieve IV use the stage split; kernel ridge regression and 2SLS
/// use every observation. Median-heuristic lengthscales are computed on all
/// observations.
pub fn run_estimator(
    estimator: EstimatorKind,
    sample: &GeneratedSample,
    split_ratio: f64,
    seed: u64,
    tuning: &TuningPolicy,
    lengthscale: Option<f64>,
    grid: &EvalGrid,
) -> Result<EstimatorOutcome> {
    let points = grid.points.as_ref();
    match estimator {
        EstimatorKind::Kiv => {
            let data = SplitDataset::from_sample(sample, split_ratio, seed)?;
            let (kx, mut warn) = input_kernel(sample.x.as_ref(), seed, lengthscale)?;
            let (kz, wz) = input_kernel(sample.z.as_ref(), seed, None)?;
            warn.extend(wz);
            let tuned = tune(&data, &kx, &kz, tuning)?;
            let model = fit_kiv(&data, &kx, &kz, tuned.lambda, tuned.xi)?;
            Ok(EstimatorOutcome {
                lambda: Some(model.lambda),
                xi: Some(model.xi),
                predictions: model.predict(points)?,
                jittered: model.fit_report.jittered(),
                lengthscale_warnings: warn,
            })
        }
        EstimatorKind::Krr => {
            let (kx, warn) = input_kernel(sample.x.as_ref(), seed, lengthscale)?;
            let cv = cv2_tune_krr_refined(sample.x.as_ref(), &sample.y, &kx, &krr_grid(), seed)?;
            let model = fit_krr(sample.x.as_ref(), &sample.y, &kx, cv.reg)?;
            Ok(EstimatorOutcome {
                lambda: Some(cv.reg),
                xi: None,
                predictions: model.predict(points)?,
                jittered: model.report.jittered(),
                lengthscale_warnings: warn,
            })
        }
        EstimatorKind::Twosls => {
            let model = fit_2sls(sample.x.as_ref(), &sample.y, sample.z.as_ref())?;
            Ok(EstimatorOutcome {
                lambda: None,
                xi: None,
                predictions: model.predict(points)?,
                jittered: false,
                lengthscale_warnings: Vec::new(),
            })
        }
        EstimatorKind::Sieve => {
            let data = SplitDataset::from_sample(sample, split_ratio, seed)?;
            let (bx, bz) = design_bases(sample.kind, sample.x.as_ref(), sample.z.as_ref())?;
            let model = fit_sieve_iv(&data, &bx, &bz, tuning)?;
            Ok(EstimatorOutcome {
                lambda: Some(model.lambda),
                xi: Some(model.xi),
                predictions: model.predict(points)?,
                jittered: model.fit_report.jittered(),
                lengthscale_warnings: Vec::new(),
            })
        }
    }
}

/// Immutable description of one replication of one cell.
#[derive(Clone, Copy, Debug)]
struct Task {
    design: DesignSpec,
    n_total: usize,
    replication: usize,
    seed: u64,
}

fn run_task(task: &Task, config: &RunConfig, grid: &EvalGrid) -> BenchmarkResult {
    let spec = DesignSpec {
        sample_size: task.n_total,
        seed: task.seed,
        ..task.design
    };
    let rho = (spec.kind == DesignKind::Demand).then_some(spec.rho);
    let sample = sample_design(&spec);
    let mut out = BenchmarkResult::default();
    for &est in &config.estimators {
        let label = est.label(config.lengthscale_override);
        let start = Instant::now();
        let outcome = sample.as_ref().map_err(|e| KivError::InvalidSpec(e.to_string())).and_then(|s| {
            let o = run_estimator(est, s, spec.split_ratio, task.seed, &config.tuning, config.lengthscale_override, grid)?;
            let mse = mse_vs_truth(&o.predictions, grid)?;
            Ok((o, mse))
        });
        let wall_ms = start.elapsed().as_millis() as u64;
        let mut record = ResultRecord {
            design: spec.kind,
            estimator: label.clone(),
            n_total: task.n_total,
            split_ratio: spec.split_ratio,
            rho,
            replication: task.replication,
            seed: task.seed,
            lambda: None,
            xi: None,
            mse: None,
            log10_mse: None,
            wall_ms,
            jitter_flag: false,
        };
        match outcome {
            Ok((o, mse)) => {
                record.lambda = o.lambda;
                record.xi = o.xi;
                record.mse = Some(mse.mse);
                record.log10_mse = Some(mse.log10_mse);
                record.jitter_flag = o.jittered;
                for w in o.lengthscale_warnings {
                    out.warnings.push(format!(
                        "{} {label} n_total={} replication={}: dimension {} has zero median distance; lengthscale {} used",
                        spec.kind, task.n_total, task.replication, w.dim, w.value
                    ));
                }
                if mse.floored {
                    out.warnings.push(format!(
                        "{} {label} n_total={} replication={}: mse floored before log10",
                        spec.kind, task.n_total, task.replication
                    ));
                }
            }
            Err(e) => out.errors.push(ErrorRecord {
                design: spec.kind,
                estimator: label,
                n_total: task.n_total,
                replication: task.replication,
                seed: task.seed,
                message: e.to_string(),
            }),
        }
        out.records.push(record);
    }
    out
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| KivError::InvalidSpec(format!("cannot start worker pool: {e}")))
}

/// Runs every cell and replication. Failures become error records; the sweep
/// itself only fails on an invalid configuration.
pub fn run_sweep(config: &RunConfig) -> Result<BenchmarkResult> {
    config.validate()?;
    let mut tasks = Vec::new();
    for design in &config.designs {
        for &n_total in &config.sample_sizes {
            let base = cell_seed(config.base_seed, design, n_total);
            for replication in 0..config.replications {
                tasks.push(Task {
                    design: *design,
                    n_total,
                    replication,
                    seed: base ^ replication as u64,
                });
            }
        }
    }
    let grids: Vec<(DesignKind, EvalGrid)> = [DesignKind::Linear, DesignKind::Sigmoid, DesignKind::Demand]
        .into_iter()
        .filter(|k| config.designs.iter().any(|d| d.kind == *k))
        .map(|k| (k, eval_grid(k)))
        .collect();
    let grid_for = |k: DesignKind| &grids.iter().find(|(g, _)| *g == k).expect("grid for every design").1;

    let parts: Vec<BenchmarkResult> =
        pool(config.jobs)?.install(|| tasks.par_iter().map(|t| run_task(t, config, grid_for(t.design.kind))).collect());
    let mut result = BenchmarkResult::default();
    for p in parts {
        result.records.extend(p.records);
        result.errors.extend(p.errors);
        result.warnings.extend(p.warnings);
    }
    result.sort();
    Ok(result)
}

/// KIV on the sigmoid design under each lengthscale override and under the
/// median heuristic. All groups see the same replications.
pub fn robustness_study(config: &RobustnessConfig) -> Result<BenchmarkResult> {
    let mut result = BenchmarkResult::default();
    for sweep in config.sweeps() {
        result.extend(run_sweep(&sweep)?);
    }
    Ok(result)
}
