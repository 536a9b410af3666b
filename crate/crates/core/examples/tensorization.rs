//! Slope energy against the combined energy on the unit square.

use warpmms::verify::{run_suite, Suite, SuiteConfig};

fn main() -> warpmms::Result<()> {
    let mut config = SuiteConfig::new(Suite::Tensorization);
    config.resolutions = vec![16, 32, 64, 128];
    let report = run_suite(&config)?;
    for m in report.metrics.iter().filter(|m| m.name == "ratio") {
        println!("N = {:>4}: E_slope / E_combined = {:.5}", m.parameter, m.value);
    }
    println!("pass: {}", report.pass);
    Ok(())
}
