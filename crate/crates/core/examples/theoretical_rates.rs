//! Regularization from the rate schedule instead of validation.

use kernel_iv::bench::{run_estimator, EstimatorKind};
use kernel_iv::designs::{eval_grid, mse_vs_truth, sample_design, DesignKind, DesignSpec};
use kernel_iv::iv::TuningPolicy;

fn main() -> kernel_iv::Result<()> {
    let grid = eval_grid(DesignKind::Sigmoid);
    let rate = TuningPolicy::TheoreticalRate { c1: 2.0, b: 2.0, c: 2.0 };
    for n in [200, 1000, 2000] {
        let spec = DesignSpec::new(DesignKind::Sigmoid, n, 1);
        let sample = sample_design(&spec)?;
        let out = run_estimator(EstimatorKind::Kiv, &sample, spec.split_ratio, spec.seed, &rate, None, &grid)?;
        let mse = mse_vs_truth(&out.predictions, &grid)?;
        println!(
            "n+m = {n:>4}: lambda {:.3e}, xi {:.3e}, log10 MSE {:.3}",
            out.lambda.unwrap_or(f64::NAN),
            out.xi.unwrap_or(f64::NAN),
            mse.log10_mse
        );
    }
    Ok(())
}
