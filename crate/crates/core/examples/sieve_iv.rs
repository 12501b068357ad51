//! Regularized sieve IV with cubic B-spline dictionaries.

use kernel_iv::designs::{eval_grid, mse_vs_truth, sample_design, DesignKind, DesignSpec};
use kernel_iv::iv::{design_bases, fit_sieve_iv, SplitDataset, TuningPolicy};

fn main() -> kernel_iv::Result<()> {
    let spec = DesignSpec::new(DesignKind::Sigmoid, 1000, 5);
    let sample = sample_design(&spec)?;
    let data = SplitDataset::from_sample(&sample, spec.split_ratio, spec.seed)?;
    let (bx, bz) = design_bases(spec.kind, sample.x.as_ref(), sample.z.as_ref())?;
    let model = fit_sieve_iv(&data, &bx, &bz, &TuningPolicy::default_grid())?;

    let grid = eval_grid(spec.kind);
    let mse = mse_vs_truth(&model.predict(grid.points.as_ref())?, &grid)?;
    println!("{} input features, {} instrument features", bx.feature_count(), bz.feature_count());
    println!("lambda {:.3e}, xi {:.3e}, log10 MSE {:.3}", model.lambda, model.xi, mse.log10_mse);
    Ok(())
}
