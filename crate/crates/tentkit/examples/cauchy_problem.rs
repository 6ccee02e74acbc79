// A full Cauchy problem with rough coefficients: solve, check the weak
// formulation, and compare the Duhamel representations.

use std::error::Error;

use tentkit::cauchy::{duhamel_identities, solve, test_bank, weak_residual, CauchyProblem, NodeField};
use tentkit::families::{band_limited, rng, BumpSource};
use tentkit::grid::GridSpec;
use tentkit::operator::{assemble, CoefficientField, Preset};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let g = GridSpec::dyadic(1, 128.0, 128, 2.0, 5, 8)?;
    let gen = assemble(&Preset::Checkerboard { low: 1.0, high: 5.0, block: 4 }.build(g)?)?;
    let lap = assemble(&CoefficientField::identity(g))?;
    let mut r = rng(7);
    let bf = BumpSource::random(g, &mut r);
    let fs = BumpSource::random(g, &mut r);
    let prob = CauchyProblem::new(&gen)
        .with_u0(band_limited(g, 4, &mut r))
        .with_div_source(NodeField::from_fn(g, g.n, |t, x, a| bf.eval(t, x, a)))
        .with_source(NodeField::from_fn(g, 1, |t, x, a| fs.eval(t, x, a)));

    let u = solve(&prob)?;
    let res = weak_residual(&u, &prob, &test_bank(&g, 8, 1))?;
    println!("weak residual over 8 test functions: {:.2e}", res.max);

    let ids = duhamel_identities(&gen, &lap, prob.u0.as_ref(), prob.big_f.as_ref())?;
    println!("Duhamel identities: lions {:?}, forward {:?}, backward {:?}", ids.lions, ids.forward, ids.backward);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
