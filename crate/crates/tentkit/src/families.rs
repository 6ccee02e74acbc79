//! Seeded test-function families: band-limited random fields, Gaussians,
//! spikes and smooth random space-time bumps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::grid::{GridSpec, SpaceTimeField, SpatialField};
use crate::C64;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    BandLimited,
    Gaussian,
    Atoms,
    Spikes,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::BandLimited, Family::Gaussian, Family::Atoms, Family::Spikes];

    pub fn name(self) -> &'static str {
        match self {
            Family::BandLimited => "band_limited",
            Family::Gaussian => "gaussian",
            Family::Atoms => "atoms",
            Family::Spikes => "spikes",
        }
    }

    pub fn schema(self) -> &'static str {
        match self {
            Family::BandLimited => "kmax: integer wavenumber cutoff; Gaussian Fourier coefficients, real, mean zero",
            Family::Gaussian => "center: random cell; sigma: log-uniform in [2h, period/32]",
            Family::Atoms => "center: cell; radius: r(B) with r^2 >= t_min; shape: flat | random",
            Family::Spikes => "cell: random; unit mass h^{-n}",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown family '{s}'"))
    }
}

/// Real, mean-zero field with standard normal Fourier coefficients on the
/// integer wavenumbers `0 < |k| <= kmax`.
pub fn band_limited(grid: GridSpec, kmax: usize, rng: &mut impl Rng) -> SpatialField {
    band_pass(grid, 1, kmax, rng)
}

/// As [`band_limited`] on the annulus `kmin <= |k| <= kmax`. The draws depend
/// on the period only, so one seed gives the same function on every resolution.
pub fn band_pass(grid: GridSpec, kmin: usize, kmax: usize, rng: &mut impl Rng) -> SpatialField {
    let w = 2.0 * std::f64::consts::PI / grid.period;
    let k = kmax as i64;
    let k0min = (kmin.max(1) as i64).pow(2);
    let mut modes = Vec::new();
    let k1_range = if grid.n == 2 { -k..=k } else { 0..=0 };
    for k1 in k1_range {
        for k0 in -k..=k {
            // half of the lattice; the conjugate partner is implicit
            if (k1, k0) <= (0, 0) || k0 * k0 + k1 * k1 > k * k {
                continue;
            }
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            if k0 * k0 + k1 * k1 < k0min {
                continue;
            }
            modes.push((k0 as f64 * w, k1 as f64 * w, a, b));
        }
    }
    SpatialField::from_fn(grid, 1, |x, _| {
        let v: f64 = modes
            .iter()
            .map(|&(a0, a1, a, b)| {
                let ph = a0 * x[0] + a1 * x[1];
                a * ph.cos() + b * ph.sin()
            })
            .sum();
        C64::new(v, 0.0)
    })
}

/// Vector field whose components are independent [`band_limited`] fields.
pub fn band_limited_vector(grid: GridSpec, kmax: usize, rng: &mut impl Rng) -> SpatialField {
    let comps: Vec<SpatialField> = (0..grid.n).map(|_| band_limited(grid, kmax, rng)).collect();
    SpatialField::from_fn(grid, grid.n, |_, _| C64::new(0.0, 0.0)).with_components(&comps)
}

/// Periodized isotropic Gaussian `exp(-|x - c|^2 / (2 sigma^2))`.
pub fn gaussian(grid: GridSpec, center: [f64; 2], sigma: f64) -> SpatialField {
    SpatialField::from_fn(grid, 1, |x, _| {
        let mut r2 = 0.0;
        for a in 0..grid.n {
            r2 += grid.displacement(x[a], center[a]).powi(2);
        }
        C64::new((-r2 / (2.0 * sigma * sigma)).exp(), 0.0)
    })
}

pub fn random_gaussian(grid: GridSpec, rng: &mut impl Rng) -> SpatialField {
    let lo = (2.0 * grid.h()).ln();
    let hi = (grid.period / 32.0).ln().max(lo);
    let sigma = rng.random_range(lo..=hi).exp();
    let c = [rng.random_range(0.0..grid.period), rng.random_range(0.0..grid.period)];
    gaussian(grid, c, sigma)
}

/// Unit-mass spike `h^{-n}` at one cell.
pub fn spike(grid: GridSpec, cell: usize) -> SpatialField {
    let mut f = SpatialField::zeros(grid, 1);
    f.data[cell] = C64::new(1.0 / grid.cell_volume(), 0.0);
    f
}

/// A sum of a few bumps Gaussian in `(log t, x)`, centered inside the ladder
/// so that the tails at both ends are negligible. Evaluable at any `t > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpSource {
    grid: GridSpec,
    bumps: Vec<(f64, f64, [f64; 2], f64, f64)>,
}

impl BumpSource {
    pub fn random(grid: GridSpec, rng: &mut impl Rng) -> Self {
        let (l0, l1) = (grid.t_min.ln(), grid.t_max.ln());
        let span = l1 - l0;
        let bumps = (0..3)
            .map(|_| {
                let lt = rng.random_range(l0 + 0.35 * span..l1 - 0.35 * span);
                let wt = span / 14.0;
                let c = [rng.random_range(0.0..grid.period), rng.random_range(0.0..grid.period)];
                let sx = lt.exp().sqrt() * rng.random_range(0.5..2.0);
                let amp: f64 = rng.sample(StandardNormal);
                (lt, wt, c, sx, amp)
            })
            .collect();
        Self { grid, bumps }
    }

    /// Component `a` is scaled by `1 + a/2` so vector fields are not isotropic.
    pub fn eval(&self, t: f64, x: [f64; 2], a: usize) -> C64 {
        if t <= 0.0 {
            return C64::new(0.0, 0.0);
        }
        let lt = t.ln();
        let v: f64 = self
            .bumps
            .iter()
            .map(|&(c_t, w_t, c, sx, amp)| {
                let mut r2 = 0.0;
                for ax in 0..self.grid.n {
                    r2 += self.grid.displacement(x[ax], c[ax]).powi(2);
                }
                amp * (1.0 + a as f64 * 0.5) * (-(lt - c_t).powi(2) / (2.0 * w_t * w_t)).exp()
                    * (-r2 / (2.0 * sx * sx)).exp()
            })
            .sum();
        C64::new(v, 0.0)
    }
}

/// [`BumpSource`] sampled on the ladder.
pub fn random_bumps(grid: GridSpec, comps: usize, rng: &mut impl Rng) -> SpaceTimeField {
    let b = BumpSource::random(grid, rng);
    SpaceTimeField::from_fn(grid, comps, |t, x, a| b.eval(t, x, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_limited_is_real_mean_zero_and_seeded() {
        let g = GridSpec::dyadic(2, 32.0, 32, 1.0, 2, 4).unwrap();
        let a = band_limited(g, 4, &mut rng(3));
        let b = band_limited(g, 4, &mut rng(3));
        assert_eq!(a, b);
        assert!(a.mean().norm() < 1e-12);
        assert!(a.data.iter().all(|z| z.im == 0.0));
        assert!(a.l2_norm() > 0.0);
    }

    #[test]
    fn band_pass_is_resolution_independent() {
        let a = GridSpec::dyadic(1, 64.0, 64, 1.0, 2, 4).unwrap();
        let b = GridSpec::dyadic(1, 64.0, 128, 1.0, 2, 4).unwrap();
        let fa = band_pass(a, 3, 6, &mut rng(4));
        let fb = band_pass(b, 3, 6, &mut rng(4));
        for c in 0..64 {
            assert!((fa.at(c, 0) - fb.at(2 * c, 0)).norm() < 1e-12);
        }
        let spec = crate::spectral::forward(&fa).remove(0);
        for k in [1usize, 2, 7, 63] {
            assert!(spec[k].norm() < 1e-9);
        }
    }

    #[test]
    fn spike_has_unit_mass() {
        let g = GridSpec::dyadic(1, 64.0, 64, 1.0, 4, 2).unwrap();
        let s = spike(g, 5);
        assert!((s.mean() * g.period - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
    }
}
