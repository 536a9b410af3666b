//! Ball-measure ratios m(B_2r)/m(B_r) on the cylinder.

use warpmms::product::Stencil;
use warpmms::space::ball_measure_from;
use warpmms::verify::Fixture;

fn main() -> warpmms::Result<()> {
    let product = Fixture::Cylinder.build(64, 64, Stencil::DISTANCE)?;
    let center = product.node(32, 0);
    let d = product.graph().bounded_single_source(center, 0.5);
    for r in [0.032, 0.05, 0.08, 0.1, 0.2] {
        let (small, big) = (
            ball_measure_from(&d, product.measure(), r),
            ball_measure_from(&d, product.measure(), 2.0 * r),
        );
        println!("r = {r:.3}: m(B_r) = {small:.5}, ratio {:.3}", big / small);
    }
    Ok(())
}
