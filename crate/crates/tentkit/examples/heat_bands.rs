// Equivalence bands for the heat extension, with refinement drift and
// grid sensitivities, written as a JSON run record.

use std::error::Error;

use tentkit::exponents::{Ext, SpaceParams, Variant};
use tentkit::families::Family;
use tentkit::grid::GridSpec;
use tentkit::verify::{run, Experiment, ExperimentSpec};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let g = GridSpec::new(1, 128.0, 128, 2.0, 64.0, 21)?;
    let spec = ExperimentSpec::new("heat-example", g)
        .with_params(vec![
            SpaceParams::from_s(-0.5, Ext::Finite(2.0), Variant::HardySobolev),
            SpaceParams::from_s(0.5, Ext::Finite(2.0), Variant::HardySobolev),
        ])
        .with_family(Family::BandLimited, 11, 8);
    let record = run(Experiment::Heat, &spec)?;
    println!("{}", record.verdict);
    for r in record.result.as_array().into_iter().flatten() {
        println!(
            "  {} in theory: {}, band [{:.3}, {:.3}]",
            r["quantity"].as_str().unwrap_or("?"),
            r["in_theory"],
            r["band"][0].as_f64().unwrap_or(f64::NAN),
            r["band"][1].as_f64().unwrap_or(f64::NAN)
        );
    }
    println!("spec hash {}", record.spec_hash);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
