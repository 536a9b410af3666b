//! Zero-set diagnostics and apex collapse for the suspension profile.

use warpmms::product::{build_warped, Stencil};
use warpmms::profile::WarpProfile;
use warpmms::space::{generate, Generator};

fn main() -> warpmms::Result<()> {
    let profile = WarpProfile::suspension(33)?;
    let report = profile.analyze_zero_set()?;
    println!("w_d zero levels: {:?}", report.zero_levels_wd);
    println!("w_m zero times:  {:?}", report.zero_times_wm);
    println!("discrete: {}, linear decay constant: {:?}", report.is_discrete, report.linear_decay_constant);

    let base = generate(&Generator::Circle { n: 16, circumference: 1.0 })?;
    let product = build_warped(&base, &profile, Stencil::Diagonal)?;
    println!(
        "{} levels x {} base vertices -> {} nodes (apex levels {:?})",
        product.level_count(),
        base.vertex_count(),
        product.node_count(),
        product.apex_levels()
    );
    Ok(())
}
