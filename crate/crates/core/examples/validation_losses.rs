//! The out-of-sample losses behind the regularization choice.

use kernel_iv::designs::{sample_design, DesignKind, DesignSpec};
use kernel_iv::iv::{tune, SplitDataset, TuningPolicy};
use kernel_iv::kernels::KernelSpec;

fn main() -> kernel_iv::Result<()> {
    let spec = DesignSpec::new(DesignKind::Sigmoid, 600, 3);
    let sample = sample_design(&spec)?;
    let data = SplitDataset::from_sample(&sample, spec.split_ratio, spec.seed)?;
    let (kx, _) = KernelSpec::gaussian_median(sample.x.as_ref(), spec.seed)?;
    let (kz, _) = KernelSpec::gaussian_median(sample.z.as_ref(), spec.seed)?;
    let tuned = tune(&data, &kx, &kz, &TuningPolicy::default_grid())?;

    println!("{:>12} {:>14}", "lambda", "stage-1 loss");
    for (lambda, loss) in &tuned.trace.stage1 {
        println!("{lambda:>12.3e} {loss:>14.6e}");
    }
    println!("\n{:>12} {:>14}", "xi", "stage-2 loss");
    for (xi, loss) in &tuned.trace.stage2 {
        println!("{xi:>12.3e} {loss:>14.6e}");
    }
    println!("\nchosen lambda {:.3e}, xi {:.3e}", tuned.lambda, tuned.xi);
    Ok(())
}
