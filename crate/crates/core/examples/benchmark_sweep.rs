//! A small replicated sweep written to disk, then summarized.

use kernel_iv::bench::{format_table, run_sweep, summarize, write_outputs, EstimatorKind, RunConfig};
use kernel_iv::designs::{DesignKind, DesignSpec};

fn main() -> kernel_iv::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "sweep-out".into());
    let config = RunConfig::new(
        vec![DesignSpec::new(DesignKind::Linear, 0, 0), DesignSpec::new(DesignKind::Sigmoid, 0, 0)],
        EstimatorKind::ALL.to_vec(),
        vec![200, 400],
    )
    .with_replications(5);
    let result = run_sweep(&config)?;
    write_outputs(out.as_ref(), std::slice::from_ref(&config), &result)?;
    print!("{}", format_table(&summarize(&result.records)?));
    println!("wrote {out}/results.csv");
    Ok(())
}
