//! Kernel IV and kernel ridge regression on the demand design under strong
//! confounding.

use kernel_iv::bench::{run_estimator, EstimatorKind};
use kernel_iv::designs::{eval_grid, mse_vs_truth, sample_design, DesignKind, DesignSpec};
use kernel_iv::iv::TuningPolicy;

fn main() -> kernel_iv::Result<()> {
    let spec = DesignSpec::new(DesignKind::Demand, 1000, 21).with_rho(0.9);
    let sample = sample_design(&spec)?;
    let grid = eval_grid(spec.kind);
    let tuning = TuningPolicy::default_grid();
    for est in [EstimatorKind::Kiv, EstimatorKind::Krr] {
        let out = run_estimator(est, &sample, spec.split_ratio, spec.seed, &tuning, None, &grid)?;
        let mse = mse_vs_truth(&out.predictions, &grid)?;
        println!("{:<4} log10 MSE {:.3} on {} grid points", est.name(), mse.log10_mse, grid.len());
    }
    Ok(())
}
