//! The logarithmic cutoff near the cone apex: remainder energy against 1/log n.

use warpmms::energy::{cutoff, Cutoff, FunctionSpec, GridFunction};
use warpmms::product::{build_warped, Stencil};
use warpmms::profile::WarpProfile;
use warpmms::space::{generate, Generator};

fn main() -> warpmms::Result<()> {
    let base = generate(&Generator::Circle {
        n: 16,
        circumference: std::f64::consts::TAU,
    })?;
    let product = build_warped(&base, &WarpProfile::cone(10001)?, Stencil::Axis)?;
    let one = GridFunction::from_spec(&product, &FunctionSpec::Constant { value: 1.0 })?;
    for n in [1e2, 1e3, 1e4] {
        let r = cutoff(Cutoff::LogEta { n }, &one)?;
        println!(
            "n = {n:>7}: remainder {:.5}, times log n {:.5} (2π = {:.5})",
            r.remainder_energy,
            r.remainder_energy * f64::ln(n),
            std::f64::consts::TAU
        );
    }
    Ok(())
}
