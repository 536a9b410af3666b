//! Build a warped product from files and export its graph and node table.

use warpmms::product::{build_warped, Stencil};
use warpmms::profile::{load_profile, save_profile, WarpProfile};
use warpmms::space::{generate, load_space, save_space, Generator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("warpmms-example");
    std::fs::create_dir_all(&dir)?;
    let (space_path, profile_path) = (dir.join("base.json"), dir.join("profile.json"));
    save_space(&generate(&Generator::RandomGeometric { n: 40, radius: 0.35, seed: 3 })?, &space_path)?;
    save_profile(&WarpProfile::suspension(21)?, &profile_path)?;

    let product = build_warped(&load_space(&space_path)?, &load_profile(&profile_path)?, Stencil::Diagonal)?;
    product.export(dir.join("product.json"), dir.join("nodes.csv"))?;
    println!(
        "{} nodes, {} edges, total mass {:.6}; written to {}",
        product.node_count(),
        product.graph().edges().len(),
        product.total_measure(),
        dir.display()
    );
    Ok(())
}
