// Critical exponents of a profile and the boundary of the well-posedness region.

use std::error::Error;

use tentkit::exponents::{
    polyline_csv, region_boundary_polyline, region_membership, ExponentProfile, Ext, Region, SpaceParams, Variant,
};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let lap = ExponentProfile::laplacian(2);
    println!("beta(-Delta) = {}", lap.beta_l());
    for s in [-0.5, 0.0, 0.5] {
        println!("s = {s:>5}: p_-(s) = {:.4}, p_+(s) = {}", lap.p_minus_s(s)?, lap.p_plus_s(s)?);
    }

    // a rough operator: p_-(L) = 0.8, q_+(L) = 6 in the plane
    let rough = ExponentProfile::new(2, 0.8, Ext::Finite(6.0), 0.8, Ext::Finite(6.0))?;
    for beta in [-0.75, -0.5, 0.0] {
        println!("beta = {beta:>5}: p~_L = {:.4}", rough.p_tilde(beta)?);
    }
    let probe = SpaceParams::from_beta(-0.5, Ext::Finite(2.0), Variant::HardySobolev);
    let m = region_membership(&rough, &probe, Region::WellposedHc);
    println!("(beta, p) = (-1/2, 2) well-posed: {} ({})", m.member, m.reason);

    let pts = region_boundary_polyline(&rough, Region::WellposedHc, 9)?;
    let mut csv = Vec::new();
    polyline_csv(&pts, &mut csv)?;
    print!("{}", String::from_utf8(csv)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
