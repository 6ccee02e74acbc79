// Coefficient presets, the discrete divergence-form generator and its semigroup.

use std::error::Error;

use tentkit::families::{band_limited, rng};
use tentkit::grid::{GridSpec, SpatialField};
use tentkit::operator::{assemble, semigroup, Engine, Preset};
use tentkit::C64;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let g = GridSpec::dyadic(1, 128.0, 128, 2.0, 5, 4)?;
    let f = band_limited(g, 4, &mut rng(5));
    let one = SpatialField::constant(g, C64::new(1.0, 0.0));
    for preset in Preset::catalog() {
        let gen = assemble(&preset.build(g)?)?;
        let whole = semigroup(&gen, &f, 8.0)?;
        let split = semigroup(&gen, &semigroup(&gen, &f, 3.0)?, 5.0)?;
        let mut diff = whole.clone();
        for (d, s) in diff.data.iter_mut().zip(&split.data) {
            *d -= s;
        }
        let ones = semigroup(&gen, &one, 4.0)?;
        let drift = ones.data.iter().map(|z| (z - 1.0).norm()).fold(0.0, f64::max);
        println!(
            "{:<22} engine {:?}: |e^-8L f| = {:.5}, composition error {:.1e}, e^-4L 1 drift {:.1e}",
            preset.name(),
            gen.resolve(Engine::Auto)?,
            whole.l2_norm(),
            diff.l2_norm() / whole.l2_norm(),
            drift
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
