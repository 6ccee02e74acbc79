// The endpoint operator `f -> e^{-tL} div f` against the L^2 norm of `f`.

use std::error::Error;

use tentkit::cauchy::endpoint_divergence_semigroup;
use tentkit::exponents::Ext;
use tentkit::families::{band_limited_vector, rng};
use tentkit::grid::GridSpec;
use tentkit::operator::{assemble, Preset};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let g = GridSpec::new(1, 256.0, 256, 1.0, 256.0, 33)?;
    for preset in [Preset::Identity, Preset::Checkerboard { low: 1.0, high: 5.0, block: 4 }] {
        let gen = assemble(&preset.build(g)?)?;
        let ratios: Vec<f64> = (0..5)
            .map(|i| {
                let f = band_limited_vector(g, 24, &mut rng(40 + i));
                endpoint_divergence_semigroup(&gen, &f, Ext::Finite(2.0)).map(|r| r.ratio.unwrap_or(f64::NAN))
            })
            .collect::<Result<_, _>>()?;
        println!("{:<14} ||G f||_T^2_0 / ||f||_2: {:?}", preset.name(), ratios.iter().map(|r| (r * 1e3).round() / 1e3).collect::<Vec<_>>());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
