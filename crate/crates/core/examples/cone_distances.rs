//! Distances on the cone over a circle: solver, closed form and product graph.

use warpmms::dsolver::{oracle_d, solve_d, GeodesicQuery, OracleKind, Resolution};
use warpmms::product::{build_warped, Stencil};
use warpmms::profile::WarpProfile;
use warpmms::space::{generate, Generator};

fn main() -> warpmms::Result<()> {
    let base = generate(&Generator::Circle {
        n: 64,
        circumference: std::f64::consts::TAU,
    })?;
    let profile = WarpProfile::cone(64)?;
    let product = build_warped(&base, &profile, Stencil::DISTANCE)?;

    println!("{:>6} {:>6} {:>6} {:>10} {:>10} {:>10}", "t0", "t1", "ell", "solver", "oracle", "graph");
    let row = product.graph().single_source(product.node(40, 0));
    for (i1, j1) in [(63, 0), (63, 8), (20, 16), (50, 32), (10, 24)] {
        let (t0, t1) = (profile.level(40), profile.level(i1));
        let ell = base.distances().get(0, j1);
        let q = GeodesicQuery::new(t0, t1, ell).with_resolution(Resolution::ORACLE);
        let solved = solve_d(&profile, &q)?.value;
        let exact = oracle_d(OracleKind::Cone, t0, t1, ell);
        let graph = row[product.node(i1, j1)];
        println!("{t0:>6.3} {t1:>6.3} {ell:>6.3} {solved:>10.6} {exact:>10.6} {graph:>10.6}");
    }
    Ok(())
}
