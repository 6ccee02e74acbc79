// Weighted tent, Z and slice norms of space-time fields, and the parabolic scaling law.

use std::error::Error;

use tentkit::exponents::Ext;
use tentkit::families::{band_limited, random_bumps, rng};
use tentkit::funcspaces::{l2_beta, slice_norm, tent_norm, z_norm, SliceOrder, TentNormSpec};
use tentkit::grid::{GridSpec, SpaceTimeField};
use tentkit::C64;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let g = GridSpec::dyadic(1, 256.0, 256, 1.0, 8, 4)?;
    let f = random_bumps(g, 1, &mut rng(1));

    // at p = 2 the tent norm is a weighted L^2 norm
    let t2 = tent_norm(&f, &TentNormSpec::new(0.0, 2.0))?;
    println!("||F||_T^2_0 = {t2:.6}, ||F||_L^2_0 = {:.6}", l2_beta(&f, 0.0));
    for p in [1.0, 4.0] {
        let spec = TentNormSpec::new(-0.25, p);
        println!("p = {p}: tent {:.6}, Z {:.6}", tent_norm(&f, &spec)?, z_norm(&f, &spec)?);
    }

    // F_2(t, x) = F(4t, 2x) about the torus center
    let c = g.period / 2.0;
    let bump = |t: f64, d: f64| C64::new((-0.5 * ((t / 30.0).ln() / 0.3).powi(2) - 0.5 * (d / 6.0).powi(2)).exp(), 0.0);
    let a = SpaceTimeField::from_fn(g, 1, |t, x, _| bump(t, g.displacement(x[0], c)));
    let b = SpaceTimeField::from_fn(g, 1, |t, x, _| bump(4.0 * t, 2.0 * g.displacement(x[0], c)));
    let spec = TentNormSpec::new(0.25, 2.0);
    let ratio = tent_norm(&b, &spec)? / tent_norm(&a, &spec)?;
    println!("scaling ratio {ratio:.4}, predicted {:.4}", 2f64.powf(2.0 * 0.25 - 1.0 - 0.5));

    let u = band_limited(g, 6, &mut rng(2));
    let e = slice_norm(&u, Ext::Finite(2.0), 4.0, SliceOrder::Plain)?;
    println!("||u||_E^2_4 = {:.6}, ||u||_2 = {:.6}", e.value, u.l2_norm());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
