// Decay of Lions' operator applied to a tent-space atom, region by region.

use std::error::Error;

use tentkit::exponents::{Ext, SpaceParams, Variant};
use tentkit::grid::GridSpec;
use tentkit::verify::{run_molecular_decay, ExperimentSpec};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let g = GridSpec::dyadic(1, 2048.0, 2048, 2.0, 13, 4)?;
    let mut spec = ExperimentSpec::new("molecular-example", g)
        .with_params(vec![SpaceParams::from_beta(0.0, Ext::Finite(1.0), Variant::Tent)]);
    spec.atom_radius = Some(2.0);
    spec.j_max = Some(5);
    let rep = run_molecular_decay(&spec)?;
    for row in &rep.rows {
        println!("j = {} region {}: {:.3e}", row.j, row.region, row.scaled);
    }
    println!("monotone {:?}, slopes {:?}, region 1 convex {:?}", rep.monotone, rep.slopes, rep.region1_convex);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
