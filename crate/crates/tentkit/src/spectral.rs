//! Fourier side of the torus: Littlewood–Paley blocks, Hardy–Sobolev and Besov
//! norms, fractional Laplacians and heat multipliers.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use thiserror::Error;

use crate::exponents::{Ext, SpaceParams};
use crate::grid::{GridError, GridSpec, SpaceTimeField, SpatialField};
use crate::C64;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("block {j} outside the resolvable band [{j_min}, {j_max}]")]
    OutOfBand { j: i32, j_min: i32, j_max: i32 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("order {0} outside [-2, 2]")]
    InvalidOrder(f64),
    #[error("integrability exponent must be positive, got {0}")]
    InvalidExponent(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn plan(m: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    type Cache = Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)>;
    static PLANS: OnceLock<Cache> = OnceLock::new();
    let cache = PLANS.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    let (planner, map) = &mut *guard;
    map.entry((m, inverse))
        .or_insert_with(|| {
            if inverse {
                planner.plan_fft_inverse(m)
            } else {
                planner.plan_fft_forward(m)
            }
        })
        .clone()
}

/// In-place DFT of one scalar component (`grid.cells()` entries). The inverse
/// includes the `1/cells` normalization.
pub fn fft(grid: &GridSpec, data: &mut [C64], inverse: bool) {
    let m = grid.points_per_axis;
    let p = plan(m, inverse);
    p.process(data);
    if grid.n == 2 {
        let mut t = vec![C64::new(0.0, 0.0); m * m];
        for r in 0..m {
            for c in 0..m {
                t[c * m + r] = data[r * m + c];
            }
        }
        p.process(&mut t);
        for r in 0..m {
            for c in 0..m {
                data[r * m + c] = t[c * m + r];
            }
        }
    }
    if inverse {
        let s = 1.0 / grid.cells() as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }
}

/// Angular wavenumber of every DFT slot, laid out like the cells.
pub fn wavenumbers(grid: &GridSpec) -> Vec<[f64; 2]> {
    let m = grid.points_per_axis as isize;
    let k0 = 2.0 * std::f64::consts::PI / grid.period;
    let w = |i: usize| {
        let i = i as isize;
        (if i < m / 2 { i } else { i - m }) as f64 * k0
    };
    (0..grid.cells())
        .map(|c| {
            let ix = grid.coords(c);
            [w(ix[0]), if grid.n == 2 { w(ix[1]) } else { 0.0 }]
        })
        .collect()
}

/// Whether a slot is the Nyquist frequency along `axis`.
fn is_nyquist(grid: &GridSpec, cell: usize, axis: usize) -> bool {
    grid.coords(cell)[axis] == grid.points_per_axis / 2
}

fn norm2(xi: [f64; 2]) -> f64 {
    xi[0] * xi[0] + xi[1] * xi[1]
}

/// Discrete symbol of the 2n-point Laplacian, `(4/h^2) sum sin^2(xi_a h/2)`.
pub fn discrete_symbol(grid: &GridSpec, xi: [f64; 2]) -> f64 {
    let h = grid.h();
    (0..grid.n)
        .map(|a| {
            let s = (0.5 * xi[a] * h).sin();
            4.0 * s * s / (h * h)
        })
        .sum()
}

/// Forward-difference symbol `(e^{i xi_a h} - 1)/h` along each axis.
pub fn difference_symbol(grid: &GridSpec, xi: [f64; 2]) -> [C64; 2] {
    let h = grid.h();
    let d = |x: f64| (C64::from_polar(1.0, x * h) - 1.0) / h;
    [d(xi[0]), if grid.n == 2 { d(xi[1]) } else { C64::new(0.0, 0.0) }]
}

/// Transforms every component of a field.
pub fn forward(f: &SpatialField) -> Vec<Vec<C64>> {
    (0..f.comps)
        .map(|a| {
            let mut v: Vec<C64> = f.data.iter().skip(a).step_by(f.comps).copied().collect();
            fft(&f.grid, &mut v, false);
            v
        })
        .collect()
}

/// Assembles a field from per-component spectra.
pub fn inverse(grid: GridSpec, spectra: Vec<Vec<C64>>) -> SpatialField {
    let comps = spectra.len();
    let mut out = SpatialField::zeros(grid, comps);
    for (a, mut v) in spectra.into_iter().enumerate() {
        fft(&grid, &mut v, true);
        for (c, z) in v.into_iter().enumerate() {
            out.data[c * comps + a] = z;
        }
    }
    out
}

/// Applies a scalar Fourier multiplier componentwise.
pub fn apply_multiplier(f: &SpatialField, symbol: impl Fn([f64; 2]) -> C64) -> SpatialField {
    let xs = wavenumbers(&f.grid);
    let mut spec = forward(f);
    for v in spec.iter_mut() {
        for (z, xi) in v.iter_mut().zip(&xs) {
            *z *= symbol(*xi);
        }
    }
    inverse(f.grid, spec)
}

fn psi(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Transition interval of [`theta`]; narrow and centered at `sqrt 2` so that
/// `sum_j chi_j^2` stays close to 1 and block `j` is centered at `|xi| = 2^j`.
pub const THETA_RAMP: (f64, f64) = (std::f64::consts::SQRT_2 - 0.1, std::f64::consts::SQRT_2 + 0.1);

/// Smooth radial cutoff: 1 on `r <= 1`, 0 on `r >= 2`.
pub fn theta(r: f64) -> f64 {
    let (a, b) = THETA_RAMP;
    if r <= a {
        return 1.0;
    }
    if r >= b {
        return 0.0;
    }
    let u = (r - a) / (b - a);
    let p = psi(1.0 - u);
    p / (p + psi(u))
}

/// Littlewood–Paley family `chi(2^{-j} xi)`, `chi(xi) = theta(|xi|) - theta(2|xi|)`,
/// truncated to the blocks that see grid frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LPFamily {
    pub j_min: i32,
    pub j_max: i32,
}

impl LPFamily {
    pub fn for_grid(grid: &GridSpec) -> Self {
        let xi_min = 2.0 * std::f64::consts::PI / grid.period;
        let xi_max = std::f64::consts::PI / grid.h() * (grid.n as f64).sqrt();
        Self {
            j_min: xi_min.log2().floor() as i32,
            j_max: xi_max.log2().ceil() as i32,
        }
    }

    pub fn chi(r: f64) -> f64 {
        theta(r) - theta(2.0 * r)
    }

    pub fn symbol(&self, j: i32, xi: [f64; 2]) -> f64 {
        Self::chi(norm2(xi).sqrt() * 2f64.powi(-j))
    }

    pub fn blocks(&self) -> impl Iterator<Item = i32> {
        self.j_min..=self.j_max
    }

    fn check(&self, j: i32) -> Result<(), SpectralError> {
        if j < self.j_min || j > self.j_max {
            return Err(SpectralError::OutOfBand {
                j,
                j_min: self.j_min,
                j_max: self.j_max,
            });
        }
        Ok(())
    }

    /// Largest deviation of `sum_j chi(2^{-j} xi)` from 1 over nonzero grid frequencies.
    pub fn pou_residual(&self, grid: &GridSpec) -> f64 {
        wavenumbers(grid)
            .iter()
            .filter(|xi| norm2(**xi) > 0.0)
            .map(|xi| (self.blocks().map(|j| self.symbol(j, *xi)).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// A norm value with its quadrature metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormValue {
    pub value: f64,
    pub band: (i32, i32),
    pub pou_residual: f64,
}

pub fn lp_block(f: &SpatialField, j: i32, fam: &LPFamily) -> Result<SpatialField, SpectralError> {
    fam.check(j)?;
    Ok(apply_multiplier(f, |xi| C64::new(fam.symbol(j, xi), 0.0)))
}

/// All blocks at once, sharing the forward transform.
pub fn lp_blocks(f: &SpatialField, fam: &LPFamily) -> Vec<(i32, SpatialField)> {
    let xs = wavenumbers(&f.grid);
    let spec = forward(f);
    fam.blocks()
        .map(|j| {
            let sp = spec
                .iter()
                .map(|v| v.iter().zip(&xs).map(|(z, xi)| z * fam.symbol(j, *xi)).collect())
                .collect();
            (j, inverse(f.grid, sp))
        })
        .collect()
}

/// `(h^n sum_x a(x)^{p/2})^{1/p}` for a per-cell squared magnitude `a`; sup for `p = inf`.
pub(crate) fn lp_of_sq(grid: &GridSpec, a: &[f64], p: Ext) -> f64 {
    match p {
        Ext::Inf => a.iter().fold(0.0f64, |m, &x| m.max(x.sqrt())),
        Ext::Finite(p) => {
            let s: f64 = a.iter().map(|&x| x.powf(0.5 * p)).sum();
            (grid.cell_volume() * s).powf(1.0 / p)
        }
    }
}

fn check_p(p: Ext) -> Result<(), SpectralError> {
    match p {
        Ext::Finite(p) if !(p > 0.0) => Err(SpectralError::InvalidExponent(p)),
        _ => Ok(()),
    }
}

/// `|| (sum_j |2^{js} Delta_j f|^2)^{1/2} ||_p`; `p = inf` is not offered.
pub fn hardy_sobolev_norm(
    f: &SpatialField,
    params: &SpaceParams,
    fam: &LPFamily,
) -> Result<NormValue, SpectralError> {
    check_p(params.p)?;
    if params.p.is_inf() {
        return Err(SpectralError::Unsupported(
            "Hardy-Sobolev norm at p = inf; use a Carleson tent norm of the heat extension".into(),
        ));
    }
    let mut sq = vec![0.0; f.grid.cells()];
    for (j, b) in lp_blocks(f, fam) {
        let w = 2f64.powf(2.0 * j as f64 * params.s);
        for (acc, v) in sq.iter_mut().zip(b.abs_sq()) {
            *acc += w * v;
        }
    }
    Ok(NormValue {
        value: lp_of_sq(&f.grid, &sq, params.p),
        band: (fam.j_min, fam.j_max),
        pou_residual: fam.pou_residual(&f.grid),
    })
}

/// `(sum_j (2^{js} ||Delta_j f||_p)^p)^{1/p}`, sup over `j` at `p = inf`.
pub fn besov_norm(
    f: &SpatialField,
    params: &SpaceParams,
    fam: &LPFamily,
) -> Result<NormValue, SpectralError> {
    check_p(params.p)?;
    let terms: Vec<f64> = lp_blocks(f, fam)
        .into_iter()
        .map(|(j, b)| 2f64.powf(j as f64 * params.s) * lp_of_sq(&f.grid, &b.abs_sq(), params.p))
        .collect();
    let value = match params.p {
        Ext::Inf => terms.iter().fold(0.0, |a: f64, &b| a.max(b)),
        Ext::Finite(p) => terms.iter().map(|t| t.powf(p)).sum::<f64>().powf(1.0 / p),
    };
    Ok(NormValue {
        value,
        band: (fam.j_min, fam.j_max),
        pou_residual: fam.pou_residual(&f.grid),
    })
}

/// Output of a multiplier that may discard the constant mode.
#[derive(Debug, Clone)]
pub struct Multiplied {
    pub field: SpatialField,
    pub warning: Option<String>,
}

/// Multiplier `|xi|^order`, with the zero frequency sent to 0.
pub fn fractional_laplacian(f: &SpatialField, order: f64) -> Result<Multiplied, SpectralError> {
    if !(-2.0..=2.0).contains(&order) {
        return Err(SpectralError::InvalidOrder(order));
    }
    let mean = f.mean();
    let warning = (order < 0.0 && mean.norm() > 1e-12 * f.l2_norm().max(1e-300))
        .then(|| format!("constant component {mean} annihilated by negative order"));
    let field = apply_multiplier(f, |xi| {
        let r2 = norm2(xi);
        if r2 == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            C64::new(r2.powf(0.5 * order), 0.0)
        }
    });
    Ok(Multiplied { field, warning })
}

/// `e^{t Delta} f` through the continuous symbol `e^{-t |xi|^2}`.
pub fn heat_multiplier(f: &SpatialField, t: f64) -> Result<SpatialField, SpectralError> {
    if t < 0.0 {
        return Err(SpectralError::NegativeTime(t));
    }
    if t == 0.0 {
        return Ok(f.clone());
    }
    Ok(apply_multiplier(f, |xi| C64::new((-t * norm2(xi)).exp(), 0.0)))
}

fn extension_with(
    f: &SpatialField,
    symbol: impl Fn(f64, [f64; 2], usize) -> C64,
    out_comps: usize,
) -> SpaceTimeField {
    let g = f.grid;
    let xs = wavenumbers(&g);
    let spec = forward(f);
    let mut out = SpaceTimeField::zeros(g, out_comps * f.comps);
    for (k, t) in g.times().into_iter().enumerate() {
        let mut sp = Vec::with_capacity(out_comps * f.comps);
        for v in &spec {
            for a in 0..out_comps {
                sp.push(
                    v.iter()
                        .zip(&xs)
                        .enumerate()
                        .map(|(c, (z, xi))| {
                            if out_comps > 1 && is_nyquist(&g, c, a) {
                                C64::new(0.0, 0.0)
                            } else {
                                z * symbol(t, *xi, a)
                            }
                        })
                        .collect(),
                );
            }
        }
        let level = inverse(g, sp);
        out.level_mut(k).copy_from_slice(&level.data);
    }
    out
}

/// `(t, x) -> e^{t Delta} f (x)` on the ladder.
pub fn heat_extension(f: &SpatialField) -> SpaceTimeField {
    extension_with(f, |t, xi, _| C64::new((-t * norm2(xi)).exp(), 0.0), 1)
}

/// `(t, x) -> grad e^{t Delta} f (x)` on the ladder, through the symbol `i xi e^{-t|xi|^2}`.
pub fn gradient_heat_extension(f: &SpatialField) -> SpaceTimeField {
    let n = f.grid.n;
    extension_with(f, |t, xi, a| C64::new(0.0, xi[a]) * (-t * norm2(xi)).exp(), n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::{SpaceParams, Variant};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn g1() -> GridSpec {
        GridSpec::dyadic(1, 64.0, 256, 0.0625, 8, 2).unwrap()
    }

    fn g2() -> GridSpec {
        GridSpec::dyadic(2, 32.0, 64, 0.25, 4, 2).unwrap()
    }

    fn mode(g: GridSpec, k: [f64; 2]) -> SpatialField {
        let w = 2.0 * PI / g.period;
        SpatialField::from_fn(g, 1, |x, _| C64::from_polar(1.0, w * (k[0] * x[0] + k[1] * x[1])))
    }

    fn gaussian(g: GridSpec, sigma: f64) -> SpatialField {
        let c = g.period / 2.0;
        SpatialField::from_fn(g, 1, |x, _| {
            let mut r2 = 0.0;
            for a in 0..g.n {
                r2 += (x[a] - c).powi(2);
            }
            C64::new((-r2 / (2.0 * sigma * sigma)).exp(), 0.0)
        })
    }

    fn hs(s: f64, p: f64) -> SpaceParams {
        SpaceParams::from_s(s, Ext::Finite(p), Variant::HardySobolev)
    }

    #[test]
    fn fft_round_trip() {
        for g in [g1(), g2()] {
            let f = gaussian(g, 2.0);
            let back = inverse(g, forward(&f));
            assert!(back.sub(&f).l2_norm() < 1e-12 * f.l2_norm());
        }
    }

    #[test]
    fn partition_of_unity_is_exact() {
        for g in [g1(), g2()] {
            let fam = LPFamily::for_grid(&g);
            assert!(fam.pou_residual(&g) < 1e-12);
        }
        assert_eq!(LPFamily::chi(0.0), 0.0);
        assert_eq!(LPFamily::chi(2.0), 0.0);
        assert_eq!(LPFamily::chi(0.5), 0.0);
    }

    #[test]
    fn block_of_constant_vanishes_and_blocks_sum_to_f() {
        let g = g2();
        let fam = LPFamily::for_grid(&g);
        let one = SpatialField::constant(g, C64::new(3.0, 0.0));
        assert!(lp_block(&one, fam.j_min, &fam).unwrap().l2_norm() < 1e-12);
        let f = gaussian(g, 1.5);
        let mut sum = SpatialField::zeros(g, 1);
        for (_, b) in lp_blocks(&f, &fam) {
            sum = sum.add(&b);
        }
        let centered = f.sub(&SpatialField::constant(g, f.mean()));
        assert!(sum.sub(&centered).l2_norm() < 1e-12 * f.l2_norm());
        assert!(lp_block(&f, fam.j_max + 1, &fam).is_err());
    }

    #[test]
    fn single_mode_block() {
        let g = g1();
        let fam = LPFamily::for_grid(&g);
        // |xi| = 2 pi * 8 / 64 = pi/4
        let f = mode(g, [8.0, 0.0]);
        let xi = 2.0 * PI * 8.0 / 64.0;
        for j in fam.blocks() {
            let b = lp_block(&f, j, &fam).unwrap();
            let want = LPFamily::chi(xi * 2f64.powi(-j));
            assert!(b.sub(&f.scaled(C64::new(want, 0.0))).l2_norm() < 1e-11);
        }
    }

    #[test]
    fn single_mode_norms() {
        let g = g1();
        let fam = LPFamily::for_grid(&g);
        let f = mode(g, [8.0, 0.0]);
        let xi = 2.0 * PI * 8.0 / 64.0;
        let s = 0.7;
        let p = 1.5;
        let amp: f64 = fam
            .blocks()
            .map(|j| (2f64.powf(j as f64 * s) * LPFamily::chi(xi * 2f64.powi(-j))).powi(2))
            .sum::<f64>()
            .sqrt();
        // |mode| = 1 everywhere, so the L^p factor is period^{1/p}
        let want = amp * g.period.powf(1.0 / p);
        let got = hardy_sobolev_norm(&f, &hs(s, p), &fam).unwrap().value;
        assert!((got - want).abs() < 1e-10 * want);
        let bes = SpaceParams::from_s(s, Ext::Finite(p), Variant::Besov);
        let want_b: f64 = fam
            .blocks()
            .map(|j| (2f64.powf(j as f64 * s) * LPFamily::chi(xi * 2f64.powi(-j)) * g.period.powf(1.0 / p)).powf(p))
            .sum::<f64>()
            .powf(1.0 / p);
        let got_b = besov_norm(&f, &bes, &fam).unwrap().value;
        assert!((got_b - want_b).abs() < 1e-10 * want_b);
    }

    #[test]
    fn zero_norms_and_infinity() {
        let g = g1();
        let fam = LPFamily::for_grid(&g);
        let z = SpatialField::zeros(g, 1);
        assert_eq!(hardy_sobolev_norm(&z, &hs(0.3, 2.0), &fam).unwrap().value, 0.0);
        let b = SpaceParams::from_s(0.3, Ext::Inf, Variant::Besov);
        assert_eq!(besov_norm(&z, &b, &fam).unwrap().value, 0.0);
        let inf = SpaceParams::from_s(0.0, Ext::Inf, Variant::HardySobolev);
        assert!(matches!(
            hardy_sobolev_norm(&z, &inf, &fam),
            Err(SpectralError::Unsupported(_))
        ));
    }

    #[test]
    fn plancherel_at_s_zero() {
        let g = g1();
        let fam = LPFamily::for_grid(&g);
        let f = gaussian(g, 1.0);
        let centered = f.sub(&SpatialField::constant(g, f.mean()));
        let r = hardy_sobolev_norm(&f, &hs(0.0, 2.0), &fam).unwrap().value / centered.l2_norm();
        assert!((0.95..=1.0 + 1e-12).contains(&r), "ratio {r}");
    }

    #[test]
    fn besov_and_hardy_sobolev_agree_at_p2() {
        let g = g1();
        let fam = LPFamily::for_grid(&g);
        for sigma in [0.7, 1.5, 3.0] {
            let f = gaussian(g, sigma);
            for s in [-0.5, 0.0, 0.5] {
                let a = hardy_sobolev_norm(&f, &hs(s, 2.0), &fam).unwrap().value;
                let b = besov_norm(&f, &SpaceParams::from_s(s, Ext::Finite(2.0), Variant::Besov), &fam)
                    .unwrap()
                    .value;
                assert!((a - b).abs() <= 1e-12 * a, "{a} {b}");
                // direct Fourier-side quadrature sum |xi|^{2s} |f^|^2 bounds both within 10%
                let xs = wavenumbers(&g);
                let sp = forward(&f);
                let scale = g.cell_volume().powi(2) / g.period.powi(g.n as i32);
                let direct: f64 = sp[0]
                    .iter()
                    .zip(&xs)
                    .filter(|(_, xi)| norm2(**xi) > 0.0)
                    .map(|(z, xi)| norm2(*xi).powf(s) * z.norm_sqr() * scale)
                    .sum::<f64>()
                    .sqrt();
                assert!((a / direct - 1.0).abs() < 0.1, "s={s}: {a} vs {direct}");
            }
        }
    }

    #[test]
    fn fractional_laplacian_examples() {
        let g = g2();
        let f = gaussian(g, 1.3);
        let centered = f.sub(&SpatialField::constant(g, f.mean()));
        let id = fractional_laplacian(&centered, 0.0).unwrap();
        assert!(id.field.sub(&centered).l2_norm() < 1e-12);
        let m = mode(g, [3.0, -2.0]);
        let xi2 = (2.0 * PI / g.period).powi(2) * 13.0;
        let lap = fractional_laplacian(&m, 2.0).unwrap().field;
        assert!(lap.sub(&m.scaled(C64::new(xi2, 0.0))).l2_norm() < 1e-9);
        let down = fractional_laplacian(&f, -0.8).unwrap();
        assert!(down.warning.is_some());
        let up = fractional_laplacian(&down.field, 0.8).unwrap();
        assert!(up.warning.is_none());
        assert!(up.field.sub(&centered).l2_norm() < 1e-10 * centered.l2_norm());
        assert!(fractional_laplacian(&f, 2.5).is_err());
    }

    #[test]
    fn heat_multiplier_examples() {
        let g = g1();
        let f = gaussian(g, 1.0);
        assert_eq!(heat_multiplier(&f, 0.0).unwrap(), f);
        assert!(heat_multiplier(&f, -1.0).is_err());
        let m = mode(g, [5.0, 0.0]);
        let xi = 2.0 * PI * 5.0 / g.period;
        let t = 0.8;
        let hm = heat_multiplier(&m, t).unwrap();
        assert!(hm.sub(&m.scaled(C64::new((-t * xi * xi).exp(), 0.0))).l2_norm() < 1e-12);
        // Gaussian widens to sqrt(sigma^2 + 2t), amplitude sigma / sqrt(sigma^2 + 2t)
        let t = 3.0;
        let sig2 = 1.0 + 2.0 * t;
        let want = SpatialField::from_fn(g, 1, |x, _| {
            C64::new((-(x[0] - 32.0).powi(2) / (2.0 * sig2)).exp() / sig2.sqrt(), 0.0)
        });
        let got = heat_multiplier(&f, t).unwrap();
        let err = got.data.iter().zip(&want.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn extensions() {
        let g = g2();
        let c = SpatialField::constant(g, C64::new(2.0, 0.0));
        let e = heat_extension(&c);
        assert!(e.data.iter().all(|z| (z - C64::new(2.0, 0.0)).norm() < 1e-12));
        assert!(gradient_heat_extension(&c).data.iter().all(|z| z.norm() < 1e-12));
        // gradient vs finite differences of the extension: O(h^2) after centering
        let f = gaussian(g, 2.0);
        let ge = gradient_heat_extension(&f);
        let he = heat_extension(&f);
        let k = 3;
        let lvl = he.level_field(k);
        let h = g.h();
        let mut err = 0.0f64;
        let mut size = 0.0f64;
        for cell in 0..g.cells() {
            for a in 0..2 {
                let fd = (lvl.data[g.shift(cell, a, 1)] - lvl.data[g.shift(cell, a, -1)]) / (2.0 * h);
                err = err.max((fd - ge.level(k)[cell * 2 + a]).norm());
                size = size.max(fd.norm());
            }
        }
        assert!(err < 0.05 * size, "{err} vs {size}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn heat_semigroup_law(a in 0.0f64..4.0, b in 0.0f64..4.0, sigma in 0.5f64..3.0) {
            let g = g1();
            let f = gaussian(g, sigma);
            let two = heat_multiplier(&heat_multiplier(&f, a).unwrap(), b).unwrap();
            let one = heat_multiplier(&f, a + b).unwrap();
            prop_assert!(two.sub(&one).l2_norm() <= 1e-12 * one.l2_norm().max(1e-300));
        }

        #[test]
        fn blocks_far_apart_are_orthogonal(j in -2i32..4, gap in 3i32..6, sigma in 0.5f64..3.0) {
            let g = g1();
            let fam = LPFamily::for_grid(&g);
            let k = j + gap;
            prop_assume!(fam.j_min <= j && k <= fam.j_max);
            for xi in wavenumbers(&g) {
                prop_assert_eq!(fam.symbol(j, xi) * fam.symbol(k, xi), 0.0);
            }
            let f = gaussian(g, sigma);
            let bj = lp_block(&f, j, &fam).unwrap();
            let both = lp_block(&bj, k, &fam).unwrap();
            prop_assert!(both.l2_norm() <= 1e-14 * f.l2_norm());
        }
    }
}
