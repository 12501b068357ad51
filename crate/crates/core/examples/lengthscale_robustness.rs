//! KIV under fixed input lengthscales versus the median heuristic.

use kernel_iv::bench::{format_table, robustness_study, summarize, RobustnessConfig};

fn main() -> kernel_iv::Result<()> {
    let config = RobustnessConfig {
        replications: 5,
        ..RobustnessConfig::default()
    };
    let result = robustness_study(&config)?;
    print!("{}", format_table(&summarize(&result.records)?));
    Ok(())
}
