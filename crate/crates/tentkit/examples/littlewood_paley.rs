// Littlewood-Paley blocks, Hardy-Sobolev and Besov norms, fractional powers of the Laplacian.

use std::error::Error;

use tentkit::exponents::{Ext, SpaceParams, Variant};
use tentkit::families::{band_pass, rng};
use tentkit::grid::GridSpec;
use tentkit::spectral::{besov_norm, fractional_laplacian, hardy_sobolev_norm, lp_blocks, LPFamily};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let g = GridSpec::dyadic(1, 512.0, 512, 1.0, 8, 4)?;
    let fam = LPFamily::for_grid(&g);
    let f = band_pass(g, 4, 40, &mut rng(3));

    for (j, block) in lp_blocks(&f, &fam) {
        let e = block.l2_norm();
        if e > 1e-12 {
            println!("block {j:>3}: {e:.5}");
        }
    }
    // at p = 2 the two norms agree
    for s in [-1.0, -0.5, 0.0] {
        let hs = hardy_sobolev_norm(&f, &SpaceParams::from_s(s, Ext::Finite(2.0), Variant::HardySobolev), &fam)?;
        let b = besov_norm(&f, &SpaceParams::from_s(s, Ext::Finite(2.0), Variant::Besov), &fam)?;
        println!("s = {s:>4}: H^(s,2) {:.5}, B^s_(2,2) {:.5}", hs.value, b.value);
    }
    let half = fractional_laplacian(&f, -0.5)?;
    println!("||(-Delta)^(-1/4) f||_2 = {:.5}", half.field.l2_norm());
    if let Some(w) = half.warning {
        println!("note: {w}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
