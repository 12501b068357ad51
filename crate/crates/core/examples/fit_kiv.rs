//! Fit kernel IV on one draw of the sigmoid design and score it against the
//! structural function.

use kernel_iv::designs::{eval_grid, mse_vs_truth, sample_design, DesignKind, DesignSpec};
use kernel_iv::iv::{fit_kiv, tune, SplitDataset, TuningPolicy};
use kernel_iv::kernels::KernelSpec;

fn main() -> kernel_iv::Result<()> {
    let spec = DesignSpec::new(DesignKind::Sigmoid, 1000, 7);
    let sample = sample_design(&spec)?;
    let data = SplitDataset::from_sample(&sample, spec.split_ratio, spec.seed)?;

    let (kx, _) = KernelSpec::gaussian_median(sample.x.as_ref(), spec.seed)?;
    let (kz, _) = KernelSpec::gaussian_median(sample.z.as_ref(), spec.seed)?;
    let tuned = tune(&data, &kx, &kz, &TuningPolicy::default_grid())?;
    let model = fit_kiv(&data, &kx, &kz, tuned.lambda, tuned.xi)?;

    let grid = eval_grid(DesignKind::Sigmoid);
    let report = mse_vs_truth(&model.predict(grid.points.as_ref())?, &grid)?;
    println!("n = {}, m = {}", data.n(), data.m());
    println!("lambda = {:.3e}, xi = {:.3e}", tuned.lambda, tuned.xi);
    println!("log10 MSE = {:.3}", report.log10_mse);
    Ok(())
}
