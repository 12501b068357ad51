//! All four estimators on the same sigmoid sample.

use kernel_iv::bench::{run_estimator, EstimatorKind};
use kernel_iv::designs::{eval_grid, mse_vs_truth, sample_design, DesignKind, DesignSpec};
use kernel_iv::iv::TuningPolicy;

fn main() -> kernel_iv::Result<()> {
    let spec = DesignSpec::new(DesignKind::Sigmoid, 1000, 11);
    let sample = sample_design(&spec)?;
    let grid = eval_grid(spec.kind);
    let tuning = TuningPolicy::default_grid();
    for est in EstimatorKind::ALL {
        let out = run_estimator(est, &sample, spec.split_ratio, spec.seed, &tuning, None, &grid)?;
        let mse = mse_vs_truth(&out.predictions, &grid)?;
        println!("{:<7} log10 MSE {:>7.3}", est.name(), mse.log10_mse);
    }
    Ok(())
}
