//! T_n applied to a smooth bump: L² norm, partial energies and error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use warpmms::energy::{gradient_field, time_discretize};
use warpmms::product::Stencil;
use warpmms::verify::{random_smooth_function, Fixture};

fn main() -> warpmms::Result<()> {
    let product = Fixture::Square.build(17, 129, Stencil::Diagonal)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let f = random_smooth_function(&product, &mut rng, Some(0.5))?;
    let ef = gradient_field(&f);
    println!("f:     |f|² {:.6}  E_t {:.6}  E_x {:.6}", f.l2_norm_sq(), ef.e_partial_t, ef.e_partial_x);
    for n in [2, 4, 8, 16, 32] {
        let g = time_discretize(&f, n)?;
        let eg = gradient_field(&g);
        println!(
            "n = {n:>2}: |T f|² {:.6}  E_t {:.6}  E_x {:.6}  |T f - f| {:.3e}",
            g.l2_norm_sq(),
            eg.e_partial_t,
            eg.e_partial_x,
            g.l2_distance_sq(&f).sqrt()
        );
    }
    Ok(())
}
