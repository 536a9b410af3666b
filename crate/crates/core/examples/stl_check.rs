//! Lipschitz constants from the warped gradient against sampled distance quotients.

use warpmms::verify::{run_suite, Fixture, Suite, SuiteConfig};

fn main() -> warpmms::Result<()> {
    let mut config = SuiteConfig::new(Suite::Stl);
    config.fixtures = vec![Fixture::Cone];
    config.resolutions = vec![32];
    config.samples = Some(200);
    let report = run_suite(&config)?;
    for m in &report.metrics {
        println!("{:<28} {:.6}", m.name, m.value);
    }
    println!("pass: {}", report.pass);
    Ok(())
}
