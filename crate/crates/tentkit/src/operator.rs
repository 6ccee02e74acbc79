//! The generator `L = -div(A grad)` on the torus, its semigroup and the
//! exponential-integrator steps used by the Duhamel operators.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exponents::{Ext, ExponentProfile};
use crate::families;
use crate::grid::{grad_h, read_tkf1, write_tkf1, GridError, GridSpec, SpatialField, Tkf1Header};
use crate::spectral::{discrete_symbol, forward, inverse, wavenumbers};
use crate::C64;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("ellipticity violated: {0}")]
    Ellipticity(String),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("engine {engine:?} unavailable: {reason}")]
    Engine { engine: Engine, reason: String },
    #[error("probe geometry: {0}")]
    Probe(String),
    #[error("coefficient file: {0}")]
    Format(String),
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

pub type Mat = [[C64; 2]; 2];

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

fn identity_mat() -> Mat {
    [[ONE, ZERO], [ZERO, ONE]]
}

/// Smallest eigenvalue of the Hermitian part and largest singular value of the leading `n x n` block.
fn mat_bounds(a: &Mat, n: usize) -> (f64, f64) {
    if n == 1 {
        return (a[0][0].re, a[0][0].norm());
    }
    let herm_min = |h11: f64, h22: f64, h12: C64| {
        let m = 0.5 * (h11 + h22);
        let d = (0.25 * (h11 - h22).powi(2) + h12.norm_sqr()).sqrt();
        (m - d, m + d)
    };
    let h12 = 0.5 * (a[0][1] + a[1][0].conj());
    let (lo, _) = herm_min(a[0][0].re, a[1][1].re, h12);
    // A^H A
    let g11 = a[0][0].norm_sqr() + a[1][0].norm_sqr();
    let g22 = a[0][1].norm_sqr() + a[1][1].norm_sqr();
    let g12 = a[0][0].conj() * a[0][1] + a[1][0].conj() * a[1][1];
    let (_, hi) = herm_min(g11, g22, g12);
    (lo, hi.max(0.0).sqrt())
}

/// Per-cell complex `n x n` matrices with certified ellipticity constants.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub grid: GridSpec,
    pub a: Vec<Mat>,
    pub lambda0: f64,
    pub lambda1: f64,
}

impl CoefficientField {
    pub fn new(grid: GridSpec, mut a: Vec<Mat>) -> Result<Self, OperatorError> {
        if grid.n == 1 {
            for m in a.iter_mut() {
                *m = [[m[0][0], ZERO], [ZERO, ZERO]];
            }
        }
        if a.len() != grid.cells() {
            return Err(OperatorError::Ellipticity(format!(
                "{} matrices for {} cells",
                a.len(),
                grid.cells()
            )));
        }
        let n = grid.n;
        let mut l0 = f64::INFINITY;
        let mut l1 = 0.0f64;
        for m in &a {
            if m.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(OperatorError::Ellipticity("non-finite coefficient".into()));
            }
            let (lo, hi) = mat_bounds(m, n);
            l0 = l0.min(lo);
            l1 = l1.max(hi);
        }
        if !(l0 > 0.0) {
            return Err(OperatorError::Ellipticity(format!("lambda0 = {l0} is not positive")));
        }
        let c = Self {
            grid,
            a,
            lambda0: l0,
            lambda1: l1,
        };
        c.probe_directions()?;
        Ok(c)
    }

    pub fn identity(grid: GridSpec) -> Self {
        Self::new(grid, vec![identity_mat(); grid.cells()]).expect("identity is elliptic")
    }

    /// Re-checks the constants on 16 real directions per cell.
    pub fn probe_directions(&self) -> Result<(), OperatorError> {
        let n = self.grid.n;
        let dirs: Vec<[f64; 2]> = if n == 1 {
            vec![[1.0, 0.0], [-1.0, 0.0]]
        } else {
            (0..16)
                .map(|k| {
                    let th = k as f64 * std::f64::consts::PI / 8.0;
                    [th.cos(), th.sin()]
                })
                .collect()
        };
        let tol = 1e-12 * self.lambda1.max(1.0);
        for m in &self.a {
            for xi in &dirs {
                let mut re = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        re += (m[i][j] * xi[j] * xi[i]).re;
                    }
                }
                if re < self.lambda0 - tol {
                    return Err(OperatorError::Ellipticity(format!(
                        "Re <A xi, xi> = {re} below lambda0 = {}",
                        self.lambda0
                    )));
                }
                for eta in &dirs {
                    let mut z = ZERO;
                    for i in 0..n {
                        for j in 0..n {
                            z += m[i][j] * xi[j] * eta[i];
                        }
                    }
                    if z.norm() > self.lambda1 + tol {
                        return Err(OperatorError::Ellipticity(format!(
                            "|<A xi, eta>| = {} above lambda1 = {}",
                            z.norm(),
                            self.lambda1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_hermitian(&self) -> bool {
        let n = self.grid.n;
        self.a
            .iter()
            .all(|m| (0..n).all(|i| (0..n).all(|j| m[i][j] == m[j][i].conj())))
    }

    pub fn adjoint(&self) -> Self {
        let a = self
            .a
            .iter()
            .map(|m| [[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
            .collect();
        Self {
            grid: self.grid,
            a,
            lambda0: self.lambda0,
            lambda1: self.lambda1,
        }
    }

    /// Component count `2 n^2`: real and imaginary part of every entry, row-major.
    pub fn save_tkf1<W: Write>(&self, w: W) -> Result<(), OperatorError> {
        let n = self.grid.n;
        let mut data = Vec::with_capacity(self.a.len() * 2 * n * n);
        for m in &self.a {
            for row in m.iter().take(n) {
                for z in row.iter().take(n) {
                    data.push(C64::new(z.re, 0.0));
                    data.push(C64::new(z.im, 0.0));
                }
            }
        }
        let hdr = Tkf1Header {
            n: n as u32,
            points_per_axis: self.grid.points_per_axis as u32,
            time_levels: 1,
            comps: (2 * n * n) as u32,
        };
        write_tkf1(w, &hdr, &data)?;
        Ok(())
    }

    pub fn load_tkf1<R: Read>(grid: GridSpec, r: R) -> Result<Self, OperatorError> {
        let (hdr, data) = read_tkf1(r)?;
        let n = grid.n;
        if hdr.n as usize != n
            || hdr.points_per_axis as usize != grid.points_per_axis
            || hdr.time_levels != 1
            || hdr.comps as usize != 2 * n * n
            || data.len() != grid.cells() * 2 * n * n
        {
            return Err(OperatorError::Format(format!("header {hdr:?} does not describe a coefficient field")));
        }
        let a = data
            .chunks(2 * n * n)
            .map(|ch| {
                let mut m = [[ZERO; 2]; 2];
                for i in 0..n {
                    for j in 0..n {
                        let k = 2 * (i * n + j);
                        m[i][j] = C64::new(ch[k].re, ch[k + 1].re);
                    }
                }
                m
            })
            .collect();
        Self::new(grid, a)
    }
}

/// Named coefficient fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum Preset {
    Identity,
    /// Scalar `low`/`high` on alternating blocks of `block` cells.
    Checkerboard { low: f64, high: f64, block: usize },
    /// Real symmetric `R diag(d) R^T` per block, `d` log-uniform in `[1, contrast]`.
    RandomContrast { contrast: f64, block: usize, seed: u64 },
    /// `I + i kappa S` with `S` real symmetric, `|S| <= 1`, per block.
    ComplexPerturbation { kappa: f64, block: usize, seed: u64 },
}

impl Preset {
    pub fn catalog() -> Vec<Preset> {
        vec![
            Preset::Identity,
            Preset::Checkerboard { low: 1.0, high: 5.0, block: 4 },
            Preset::RandomContrast { contrast: 100.0, block: 4, seed: 1 },
            Preset::ComplexPerturbation { kappa: 0.5, block: 4, seed: 1 },
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Identity => "identity",
            Preset::Checkerboard { .. } => "checkerboard",
            Preset::RandomContrast { .. } => "random_contrast",
            Preset::ComplexPerturbation { .. } => "complex_perturbation",
        }
    }

    pub fn schema(&self) -> &'static str {
        match self {
            Preset::Identity => "no parameters",
            Preset::Checkerboard { .. } => "low > 0, high > 0: scalar values; block: cells per tile",
            Preset::RandomContrast { .. } => "contrast in [1, 100]; block: cells per tile; seed",
            Preset::ComplexPerturbation { .. } => "kappa in [0, 1); block: cells per tile; seed",
        }
    }

    /// Default parameters for a preset name.
    pub fn by_name(name: &str) -> Result<Preset, OperatorError> {
        Self::catalog()
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| OperatorError::UnknownPreset(name.to_string()))
    }

    /// The same physical coefficients on a grid with twice the points per axis.
    pub fn refined(self) -> Self {
        match self {
            Preset::Identity => Preset::Identity,
            Preset::Checkerboard { low, high, block } => Preset::Checkerboard { low, high, block: 2 * block },
            Preset::RandomContrast { contrast, block, seed } => Preset::RandomContrast { contrast, block: 2 * block, seed },
            Preset::ComplexPerturbation { kappa, block, seed } => {
                Preset::ComplexPerturbation { kappa, block: 2 * block, seed }
            }
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            Preset::RandomContrast { contrast, block, .. } => Preset::RandomContrast { contrast, block, seed },
            Preset::ComplexPerturbation { kappa, block, .. } => Preset::ComplexPerturbation { kappa, block, seed },
            p => p,
        }
    }

    pub fn build(&self, grid: GridSpec) -> Result<CoefficientField, OperatorError> {
        let n = grid.n;
        let m = grid.points_per_axis;
        let tile = |cell: usize, block: usize| -> usize {
            let c = grid.coords(cell);
            let b = block.max(1);
            let tiles = m.div_ceil(b);
            c[0] / b + tiles * (c[1] / b)
        };
        let a: Vec<Mat> = match *self {
            Preset::Identity => vec![identity_mat(); grid.cells()],
            Preset::Checkerboard { low, high, block } => (0..grid.cells())
                .map(|cell| {
                    let c = grid.coords(cell);
                    let b = block.max(1);
                    let v = if (c[0] / b + c[1] / b) % 2 == 0 { low } else { high };
                    [[C64::new(v, 0.0), ZERO], [ZERO, C64::new(v, 0.0)]]
                })
                .collect(),
            Preset::RandomContrast { contrast, block, seed } => {
                if !(1.0..=100.0).contains(&contrast) {
                    return Err(OperatorError::Ellipticity(format!("contrast {contrast} outside [1, 100]")));
                }
                let mut rng = families::rng(seed);
                let tiles = m.div_ceil(block.max(1)).pow(n as u32);
                let mats: Vec<Mat> = (0..tiles)
                    .map(|_| {
                        let d0 = rng.random_range(0.0..=contrast.ln()).exp();
                        let d1 = rng.random_range(0.0..=contrast.ln()).exp();
                        if n == 1 {
                            return [[C64::new(d0, 0.0), ZERO], [ZERO, ZERO]];
                        }
                        let th: f64 = rng.random_range(0.0..std::f64::consts::PI);
                        let (c, s) = (th.cos(), th.sin());
                        let a11 = c * c * d0 + s * s * d1;
                        let a22 = s * s * d0 + c * c * d1;
                        let a12 = c * s * (d0 - d1);
                        [[C64::new(a11, 0.0), C64::new(a12, 0.0)], [C64::new(a12, 0.0), C64::new(a22, 0.0)]]
                    })
                    .collect();
                (0..grid.cells()).map(|cell| mats[tile(cell, block)]).collect()
            }
            Preset::ComplexPerturbation { kappa, block, seed } => {
                if !(0.0..1.0).contains(&kappa) {
                    return Err(OperatorError::Ellipticity(format!("kappa {kappa} outside [0, 1)")));
                }
                let mut rng = families::rng(seed);
                let tiles = m.div_ceil(block.max(1)).pow(n as u32);
                let mats: Vec<Mat> = (0..tiles)
                    .map(|_| {
                        let (s11, s12, s22) = if n == 1 {
                            (rng.random_range(-1.0..=1.0), 0.0, 0.0)
                        } else {
                            let s11: f64 = rng.random_range(-1.0..1.0);
                            let s12: f64 = rng.random_range(-1.0..1.0);
                            let s22: f64 = rng.random_range(-1.0..1.0);
                            let mid = 0.5 * (s11 + s22);
                            let rad = (0.25 * (s11 - s22).powi(2) + s12 * s12).sqrt();
                            let nrm = (mid.abs() + rad).max(1.0);
                            (s11 / nrm, s12 / nrm, s22 / nrm)
                        };
                        let i = C64::new(0.0, kappa);
                        [[ONE + i * s11, i * s12], [i * s12, if n == 2 { ONE + i * s22 } else { ZERO }]]
                    })
                    .collect();
                (0..grid.cells()).map(|cell| mats[tile(cell, block)]).collect()
            }
        };
        CoefficientField::new(grid, a)
    }
}

impl std::str::FromStr for Preset {
    type Err = OperatorError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::by_name(s)
    }
}

/// Compressed sparse rows.
#[derive(Debug, Clone)]
pub struct Csr {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<C64>,
}

impl Csr {
    pub fn apply(&self, u: &[C64], out: &mut [C64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut s = ZERO;
            for k in self.rows[r]..self.rows[r + 1] {
                s += self.vals[k] * u[self.cols[k]];
            }
            *o = s;
        }
    }

    fn dim(&self) -> usize {
        self.rows.len() - 1
    }

    /// Max absolute row sum.
    fn norm_inf(&self) -> f64 {
        (0..self.dim())
            .map(|r| (self.rows[r]..self.rows[r + 1]).map(|k| self.vals[k].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Max absolute column sum.
    fn norm_1(&self) -> f64 {
        let mut c = vec![0.0; self.dim()];
        for (k, v) in self.vals.iter().enumerate() {
            c[self.cols[k]] += v.norm();
        }
        c.into_iter().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let d = self.dim();
        let mut m = DMatrix::from_element(d, d, ZERO);
        for r in 0..d {
            for k in self.rows[r]..self.rows[r + 1] {
                m[(r, self.cols[k])] += self.vals[k];
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Spectral for `A = I`, Chebyshev for Hermitian `A`, Taylor otherwise.
    Auto,
    /// Padé-13 scaling and squaring on the dense matrix.
    Dense,
    /// Exact DFT multipliers; only for `A = I`.
    Spectral,
    /// Chebyshev expansion on `[0, Gershgorin bound]`; only for Hermitian `A`.
    Chebyshev,
    /// Truncated Taylor series with substeps; any `A`.
    Taylor,
}

/// Largest grid on which the dense engine is allowed.
pub const DENSE_LIMIT: usize = 2048;

/// Per step length: the fits of `exp(-tau l)` and of each source weight, made on first use.
type ChebCoeffs = Arc<[OnceLock<Vec<f64>>; MAX_SOURCE_DEGREE + 2]>;

/// The assembled `L = -div_h(A^ grad_h)`, with `A^(x)` the mean of `A` over
/// the `2^n` cells `x + sum eps_a e_a`.
pub struct DiscreteGenerator {
    pub coeff: CoefficientField,
    /// Corner-averaged coefficients used in the flux.
    pub ahat: Vec<Mat>,
    pub csr: Csr,
    pub hermitian: bool,
    pub identity: bool,
    pub engine: Engine,
    gershgorin: f64,
    norm1: f64,
    dense: OnceLock<DMatrix<C64>>,
    exp_cache: Mutex<HashMap<u64, Arc<DMatrix<C64>>>>,
    cheb_cache: Mutex<HashMap<u64, ChebCoeffs>>,
}

impl std::fmt::Debug for DiscreteGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteGenerator")
            .field("grid", &self.coeff.grid)
            .field("hermitian", &self.hermitian)
            .field("identity", &self.identity)
            .field("engine", &self.engine)
            .finish()
    }
}

pub fn assemble(coeff: &CoefficientField) -> Result<DiscreteGenerator, OperatorError> {
    coeff.probe_directions()?;
    let g = coeff.grid;
    let n = g.n;
    let h = g.h();
    let cells = g.cells();
    // corner-averaged coefficients
    let corners: Vec<Vec<usize>> = (0..(1usize << n))
        .map(|mask| {
            (0..cells)
                .map(|c| {
                    let mut x = c;
                    for a in 0..n {
                        if mask & (1 << a) != 0 {
                            x = g.shift(x, a, 1);
                        }
                    }
                    x
                })
                .collect()
        })
        .collect();
    let w = 1.0 / corners.len() as f64;
    let ahat: Vec<Mat> = (0..cells)
        .map(|c| {
            let mut m = [[ZERO; 2]; 2];
            for cs in &corners {
                let a = &coeff.a[cs[c]];
                for i in 0..n {
                    for j in 0..n {
                        m[i][j] += a[i][j] * w;
                    }
                }
            }
            m
        })
        .collect();
    // (Lu)(x) = -(1/h) sum_a [G_a(x) - G_a(x - e_a)],  G_a(z) = sum_b A^_ab(z) (u(z + e_b) - u(z)) / h
    let mut rows = vec![0usize];
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let hh = 1.0 / (h * h);
    for x in 0..cells {
        let mut entries: Vec<(usize, C64)> = Vec::with_capacity(9);
        for a in 0..n {
            for (z, sign) in [(x, -1.0), (g.shift(x, a, -1), 1.0)] {
                for b in 0..n {
                    let coef = ahat[z][a][b] * (sign * hh);
                    entries.push((g.shift(z, b, 1), coef));
                    entries.push((z, -coef));
                }
            }
        }
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, C64)> = Vec::new();
        for (c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == c => last.1 += v,
                _ => merged.push((c, v)),
            }
        }
        for (c, v) in merged {
            cols.push(c);
            vals.push(v);
        }
        rows.push(cols.len());
    }
    let csr = Csr { rows, cols, vals };
    let identity = coeff.a.iter().all(|m| {
        (0..n).all(|i| (0..n).all(|j| m[i][j] == if i == j { ONE } else { ZERO }))
    });
    let hermitian = coeff.is_hermitian();
    Ok(DiscreteGenerator {
        coeff: coeff.clone(),
        ahat,
        gershgorin: csr.norm_inf(),
        norm1: csr.norm_1(),
        csr,
        hermitian,
        identity,
        engine: Engine::Auto,
        dense: OnceLock::new(),
        exp_cache: Mutex::new(HashMap::new()),
        cheb_cache: Mutex::new(HashMap::new()),
    })
}

/// Highest source degree accepted by [`DiscreteGenerator::step`].
pub const MAX_SOURCE_DEGREE: usize = 3;

fn phi_series(x: f64, k: usize) -> f64 {
    // sum_j (-x)^j / (j + k)!
    let mut term = 1.0;
    for j in 1..=k {
        term /= j as f64;
    }
    let mut s = term;
    for j in 1..60 {
        term *= -x / (j + k) as f64;
        s += term;
        if term.abs() < 1e-18 * s.abs() {
            break;
        }
    }
    s
}

/// `phi_k(x) = int_0^1 e^{-(1-r)x} r^{k-1}/(k-1)! dr`, so `phi_0 = e^{-x}`,
/// `phi_1 = (1 - e^{-x})/x`, `phi_{k+1} = (1/k! - phi_k)/x`.
pub fn phi(x: f64, k: usize) -> f64 {
    if k == 0 {
        return (-x).exp();
    }
    if x < 1.0 {
        return phi_series(x, k);
    }
    let mut p = (-x).exp();
    let mut fact = 1.0;
    for j in 1..=k {
        p = (1.0 / fact - p) / x;
        fact *= j as f64;
    }
    p
}

/// Weight of the source coefficient `a_k` (for `sigma^k`) over a slab of length `tau`:
/// `int_0^tau e^{-(tau - s) lambda} s^k ds = tau^{k+1} k! phi_{k+1}(tau lambda)`.
fn source_weight(tau: f64, lambda: f64, k: usize) -> f64 {
    let fact: f64 = (1..=k).map(|j| j as f64).product();
    tau.powi(k as i32 + 1) * fact * phi(tau * lambda, k + 1)
}

/// Chebyshev coefficients of `f` on `[0, g]`, from a DCT of the values at the
/// first-kind nodes, and the largest sampled `|f|`.
fn cheb_coeffs(f: impl Fn(f64) -> f64, g: f64, m: usize) -> (Vec<f64>, f64) {
    let mut planner = rustfft::FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(2 * m);
    let mut buf = vec![ZERO; 2 * m];
    let mut fmax = 0.0f64;
    for j in 0..m {
        let x = (std::f64::consts::PI * (j as f64 + 0.5) / m as f64).cos();
        let v = f(0.5 * g * (x + 1.0));
        fmax = fmax.max(v.abs());
        buf[j] = C64::new(v, 0.0);
        buf[2 * m - 1 - j] = C64::new(v, 0.0);
    }
    fft.process(&mut buf);
    let mut c: Vec<f64> = (0..m)
        .map(|k| (buf[k] * C64::from_polar(1.0, -std::f64::consts::PI * k as f64 / (2 * m) as f64)).re / m as f64)
        .collect();
    c[0] *= 0.5;
    (c, fmax)
}

fn cheb_fit(f: impl Fn(f64) -> f64 + Copy, g: f64, start: usize) -> Vec<f64> {
    let mut m = start.next_power_of_two().max(32);
    loop {
        let (c, fmax) = cheb_coeffs(f, g, m);
        // the DCT is only good to a few ulps of the largest value, times log m
        let scale = fmax.max(1e-300);
        let floor = 1e-15f64.max(4.0 * f64::EPSILON * (m as f64).log2()) * scale;
        let tail = c[m - m / 8..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if tail <= floor || m >= 1 << 18 {
            let keep = c.iter().rposition(|v| v.abs() > floor).map_or(1, |k| k + 1);
            return c[..keep].to_vec();
        }
        m *= 2;
    }
}

fn axpy(y: &mut [C64], a: C64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn vnorm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Dense matrix exponential by Padé-13 scaling and squaring.
pub fn expm(a: &DMatrix<C64>) -> DMatrix<C64> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let d = a.nrows();
    let norm1 = (0..d).map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    let s = if norm1 > THETA13 { (norm1 / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a * C64::new(2f64.powi(-s), 0.0);
    let id = DMatrix::<C64>::identity(d, d);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let c = |k: usize| C64::new(B[k], 0.0);
    let u_inner = &a6 * (&a6 * c(13) + &a4 * c(11) + &a2 * c(9)) + &a6 * c(7) + &a4 * c(5) + &a2 * c(3) + &id * c(1);
    let u = &a * u_inner;
    let v = &a6 * (&a6 * c(12) + &a4 * c(10) + &a2 * c(8)) + &a6 * c(6) + &a4 * c(4) + &a2 * c(2) + &id * c(0);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Pade denominator is nonsingular");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

impl DiscreteGenerator {
    pub fn grid(&self) -> GridSpec {
        self.coeff.grid
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn gershgorin(&self) -> f64 {
        self.gershgorin
    }

    pub fn apply(&self, u: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; u.len()];
        self.csr.apply(u, &mut out);
        out
    }

    pub fn apply_field(&self, f: &SpatialField) -> SpatialField {
        SpatialField {
            grid: f.grid,
            comps: 1,
            data: self.apply(&f.data),
        }
    }

    /// `(A^ - I) v` for a vector field `v` with `n` components per cell.
    pub fn perturbation(&self, v: &SpatialField) -> SpatialField {
        let n = self.grid().n;
        let mut out = SpatialField::zeros(v.grid, n);
        for c in 0..self.grid().cells() {
            let m = &self.ahat[c];
            for i in 0..n {
                let mut s = ZERO;
                for j in 0..n {
                    let e = if i == j { m[i][j] - ONE } else { m[i][j] };
                    s += e * v.data[c * n + j];
                }
                out.data[c * n + i] = s;
            }
        }
        out
    }

    pub fn dense(&self) -> &DMatrix<C64> {
        self.dense.get_or_init(|| self.csr.to_dense())
    }

    /// The generator of the adjoint semigroup.
    pub fn adjoint(&self) -> Result<DiscreteGenerator, OperatorError> {
        Ok(assemble(&self.coeff.adjoint())?.with_engine(self.engine))
    }

    pub fn resolve(&self, engine: Engine) -> Result<Engine, OperatorError> {
        let cells = self.grid().cells();
        let unavailable = |reason: &str| OperatorError::Engine {
            engine,
            reason: reason.to_string(),
        };
        match engine {
            Engine::Auto => Ok(if self.identity {
                Engine::Spectral
            } else if self.hermitian {
                Engine::Chebyshev
            } else {
                Engine::Taylor
            }),
            Engine::Dense if cells > DENSE_LIMIT => Err(unavailable("grid too large for dense exponentials")),
            Engine::Spectral if !self.identity => Err(unavailable("needs A = I")),
            Engine::Chebyshev if !self.hermitian => Err(unavailable("needs Hermitian A")),
            e => Ok(e),
        }
    }

    /// One exponential-integrator step of length `tau` for `y' + L y = g(s)`,
    /// `y(0) = u`, with the source `g(s) = sum_k source[k] s^k` on the slab.
    /// Exact up to the engine's accuracy.
    pub fn step(&self, tau: f64, u: &[C64], source: &[&[C64]]) -> Result<Vec<C64>, OperatorError> {
        if tau < 0.0 {
            return Err(OperatorError::NegativeTime(tau));
        }
        if source.len() > MAX_SOURCE_DEGREE + 1 {
            return Err(OperatorError::Engine {
                engine: self.engine,
                reason: format!("source degree {} above {MAX_SOURCE_DEGREE}", source.len() - 1),
            });
        }
        if tau == 0.0 {
            return Ok(u.to_vec());
        }
        match self.resolve(self.engine)? {
            Engine::Spectral => Ok(self.step_spectral(tau, u, source)),
            Engine::Chebyshev => Ok(self.step_chebyshev(tau, u, source)),
            Engine::Taylor => Ok(self.step_taylor(tau, u, source)),
            Engine::Dense => Ok(self.step_dense(tau, u, source)),
            Engine::Auto => unreachable!("resolved above"),
        }
    }

    fn step_spectral(&self, tau: f64, u: &[C64], source: &[&[C64]]) -> Vec<C64> {
        let g = self.grid();
        let xs = wavenumbers(&g);
        let to_hat = |v: &[C64]| forward(&SpatialField { grid: g, comps: 1, data: v.to_vec() }).remove(0);
        let uh = to_hat(u);
        let sh: Vec<Vec<C64>> = source.iter().map(|s| to_hat(s)).collect();
        let out: Vec<C64> = (0..xs.len())
            .map(|c| {
                let lam = discrete_symbol(&g, xs[c]);
                let mut z = uh[c] * (-tau * lam).exp();
                for (k, s) in sh.iter().enumerate() {
                    z += s[c] * source_weight(tau, lam, k);
                }
                z
            })
            .collect();
        inverse(g, vec![out]).data
    }

    /// Fits for `tau`, with the first `sources + 1` sets initialized.
    fn cheb_for(&self, tau: f64, sources: usize) -> ChebCoeffs {
        let sets = self
            .cheb_cache
            .lock()
            .expect("cache poisoned")
            .entry(tau.to_bits())
            .or_insert_with(|| Arc::new(std::array::from_fn(|_| OnceLock::new())))
            .clone();
        let gb = self.gershgorin;
        let start = (40.0 * tau * gb).sqrt() as usize + 30;
        for (i, set) in sets.iter().enumerate().take(sources + 1) {
            set.get_or_init(|| {
                if i == 0 {
                    cheb_fit(|l| (-tau * l).exp(), gb, start)
                } else {
                    cheb_fit(|l| source_weight(tau, l, i - 1), gb, start)
                }
            });
        }
        sets
    }

    fn step_chebyshev(&self, tau: f64, u: &[C64], source: &[&[C64]]) -> Vec<C64> {
        let coeffs = self.cheb_for(tau, source.len());
        let fit = |i: usize| coeffs[i].get().expect("initialized by cheb_for");
        let d = u.len();
        let gb = self.gershgorin;
        let inputs: Vec<(&[C64], &Vec<f64>)> = std::iter::once((u, fit(0)))
            .chain(source.iter().enumerate().map(|(k, s)| (*s, fit(k + 1))))
            .collect();
        let m = inputs.iter().map(|(_, c)| c.len()).max().unwrap_or(1);
        // Clenshaw with vector coefficients v_k = sum_i c^i_k w_i, on X = (2L - g)/g
        let coef_vec = |k: usize| -> Vec<C64> {
            let mut v = vec![ZERO; d];
            for (w, c) in &inputs {
                if let Some(&ck) = c.get(k) {
                    axpy(&mut v, C64::new(ck, 0.0), w);
                }
            }
            v
        };
        let mut b1 = vec![ZERO; d];
        let mut b2 = vec![ZERO; d];
        let mut lx = vec![ZERO; d];
        for k in (1..m).rev() {
            self.csr.apply(&b1, &mut lx);
            let mut b0 = coef_vec(k);
            for i in 0..d {
                b0[i] += (lx[i] * (4.0 / gb) - b1[i] * 2.0) - b2[i];
            }
            b2 = b1;
            b1 = b0;
        }
        self.csr.apply(&b1, &mut lx);
        let mut out = coef_vec(0);
        for i in 0..d {
            out[i] += (lx[i] * (2.0 / gb) - b1[i]) - b2[i];
        }
        out
    }

    fn step_taylor(&self, tau: f64, u: &[C64], source: &[&[C64]]) -> Vec<C64> {
        // augmented state (y, z_0..z_{K-1}) with z_j(s) = s^{K-1-j}/(K-1-j)!:
        // y' = -L y + sum_k k! a_k z_{K-1-k},  z_j' = z_{j+1},  z_{K-1}' = 0
        let d = u.len();
        let kk = source.len();
        let fact = |k: usize| (1..=k).map(|j| j as f64).product::<f64>();
        let s = ((tau * self.norm1) / 3.0).ceil().max(1.0) as usize;
        let hs = tau / s as f64;
        let mut y = u.to_vec();
        let mut z = vec![0.0; kk];
        if kk > 0 {
            z[kk - 1] = 1.0;
        }
        let mut ly = vec![ZERO; d];
        for _ in 0..s {
            let mut ty = y.clone();
            let mut tz = z.clone();
            let mut acc = y.clone();
            let mut acc_z = z.clone();
            for k in 1..400 {
                self.csr.apply(&ty, &mut ly);
                let f = hs / k as f64;
                let mut next = vec![ZERO; d];
                for i in 0..d {
                    next[i] = -ly[i];
                }
                for (deg, a) in source.iter().enumerate() {
                    let w = fact(deg) * tz[kk - 1 - deg];
                    if w != 0.0 {
                        axpy(&mut next, C64::new(w, 0.0), a);
                    }
                }
                next.iter_mut().for_each(|v| *v *= f);
                let next_z: Vec<f64> = (0..kk).map(|j| if j + 1 < kk { tz[j + 1] * f } else { 0.0 }).collect();
                ty = next;
                tz = next_z;
                axpy(&mut acc, ONE, &ty);
                for j in 0..kk {
                    acc_z[j] += tz[j];
                }
                if k > 2 && tz.iter().all(|&v| v == 0.0) && vnorm(&ty) <= 1e-17 * vnorm(&acc).max(1e-300) {
                    break;
                }
            }
            y = acc;
            z = acc_z;
        }
        y
    }

    fn exp_dense(&self, tau: f64) -> Arc<DMatrix<C64>> {
        let key = tau.to_bits();
        if let Some(m) = self.exp_cache.lock().expect("cache poisoned").get(&key) {
            return m.clone();
        }
        let m = Arc::new(expm(&(self.dense() * C64::new(-tau, 0.0))));
        self.exp_cache.lock().expect("cache poisoned").insert(key, m.clone());
        m
    }

    fn step_dense(&self, tau: f64, u: &[C64], source: &[&[C64]]) -> Vec<C64> {
        let d = u.len();
        if source.is_empty() {
            let e = self.exp_dense(tau);
            return (&*e * nalgebra::DVector::from_column_slice(u)).as_slice().to_vec();
        }
        // the exponential of the block matrix [[-tau L, I, 0..], [0, 0, I, ..], ..]
        // has first block row [phi_0, phi_1, .., phi_K] evaluated at tau L
        let kk = source.len();
        let dim = (kk + 1) * d;
        let mut big = DMatrix::from_element(dim, dim, ZERO);
        let l = self.dense();
        for i in 0..d {
            for j in 0..d {
                big[(i, j)] = -l[(i, j)] * tau;
            }
            for b in 0..kk {
                big[(b * d + i, (b + 1) * d + i)] = ONE;
            }
        }
        let e = expm(&big);
        let fact = |k: usize| (1..=k).map(|j| j as f64).product::<f64>();
        (0..d)
            .map(|i| {
                let mut s = ZERO;
                for j in 0..d {
                    s += e[(i, j)] * u[j];
                    for (k, a) in source.iter().enumerate() {
                        s += e[(i, (k + 1) * d + j)] * (tau.powi(k as i32 + 1) * fact(k)) * a[j];
                    }
                }
                s
            })
            .collect()
    }
}

/// `e^{-tL} f`, componentwise for vector fields.
pub fn semigroup(gen: &DiscreteGenerator, f: &SpatialField, t: f64) -> Result<SpatialField, OperatorError> {
    if t < 0.0 {
        return Err(OperatorError::NegativeTime(t));
    }
    let mut out = SpatialField::zeros(f.grid, f.comps);
    for a in 0..f.comps {
        let comp = f.component(a);
        let v = gen.step(t, &comp.data, &[])?;
        for (c, z) in v.into_iter().enumerate() {
            out.data[c * f.comps + a] = z;
        }
    }
    Ok(out)
}

/// `grad_h e^{-tL} f` for scalar `f`.
pub fn grad_semigroup(gen: &DiscreteGenerator, f: &SpatialField, t: f64) -> Result<SpatialField, OperatorError> {
    if !(t > 0.0) {
        return Err(OperatorError::NonPositiveTime(t));
    }
    Ok(grad_h(&semigroup(gen, f, t)?))
}

/// Fitted off-diagonal decay `||1_E e^{-tL} 1_F|| ~ exp(-c d^2/t)`.
#[derive(Debug, Clone, Serialize)]
pub struct DecayRecord {
    pub t: f64,
    pub separation: f64,
    /// `(d(E,F)^2 / t, measured norm)` per trial.
    pub samples: Vec<(f64, f64)>,
    pub mean_norm: f64,
    pub fitted_c: f64,
    pub residual: f64,
}

fn restrict(v: &[C64], mask: &[bool]) -> Vec<C64> {
    v.iter().zip(mask).map(|(z, &m)| if m { *z } else { ZERO }).collect()
}

/// `||1_E S 1_F||_{2->2}` by power iteration on `1_F S^* 1_E S 1_F`.
fn restricted_norm(
    gen: &DiscreteGenerator,
    adj: &DiscreteGenerator,
    t: f64,
    e: &[bool],
    f: &[bool],
    rng: &mut impl Rng,
) -> Result<f64, OperatorError> {
    let d = e.len();
    let mut v: Vec<C64> = (0..d).map(|_| C64::new(rng.random_range(-1.0..1.0), 0.0)).collect();
    v = restrict(&v, f);
    let mut est = 0.0;
    for _ in 0..30 {
        let nv = vnorm(&v);
        if nv == 0.0 {
            return Ok(0.0);
        }
        v.iter_mut().for_each(|z| *z /= nv);
        let w = restrict(&gen.step(t, &v, &[])?, e);
        let new_est = vnorm(&w);
        v = restrict(&adj.step(t, &w, &[])?, f);
        if (new_est - est).abs() <= 1e-6 * new_est {
            est = new_est;
            break;
        }
        est = new_est;
    }
    Ok(est)
}

pub fn offdiagonal_probe(
    gen: &DiscreteGenerator,
    t: f64,
    separation: f64,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<DecayRecord, OperatorError> {
    let g = gen.grid();
    if !(separation >= 2.0 * g.h()) {
        return Err(OperatorError::Probe(format!("separation {separation} below 2h = {}", 2.0 * g.h())));
    }
    if !(t > 0.0) {
        return Err(OperatorError::NonPositiveTime(t));
    }
    let adj = if gen.hermitian { None } else { Some(gen.adjoint()?) };
    let adj = adj.as_ref().unwrap_or(gen);
    let mut samples = Vec::with_capacity(trials);
    for _ in 0..trials {
        let x = rng.random_range(0..g.cells());
        let re = rng.random_range(g.h()..=separation.max(2.0 * g.h()));
        let e: Vec<bool> = (0..g.cells()).map(|c| g.distance(x, c) < re).collect();
        let f: Vec<bool> = (0..g.cells())
            .map(|c| {
                let d = g.distance(x, c);
                d >= re + separation && d < re + 2.0 * separation
            })
            .collect();
        if !f.iter().any(|&b| b) {
            return Err(OperatorError::Probe("no cells at the requested separation".into()));
        }
        let mut dist = f64::INFINITY;
        for a in (0..g.cells()).filter(|&c| e[c]) {
            for b in (0..g.cells()).filter(|&c| f[c]) {
                dist = dist.min(g.distance(a, b));
            }
        }
        let nrm = restricted_norm(gen, adj, t, &e, &f, rng)?;
        samples.push((dist * dist / t, nrm));
    }
    let pts: Vec<(f64, f64)> = samples.iter().filter(|s| s.1 > 0.0).map(|&(x, y)| (x, y.ln())).collect();
    let (slope, residual) = fit_line(&pts);
    Ok(DecayRecord {
        t,
        separation,
        mean_norm: samples.iter().map(|s| s.1).sum::<f64>() / trials.max(1) as f64,
        samples,
        fitted_c: -slope,
        residual,
    })
}

/// Least squares slope and RMS residual; a single abscissa gives the slope through the origin.
fn fit_line(pts: &[(f64, f64)]) -> (f64, f64) {
    let m = pts.len() as f64;
    if pts.is_empty() {
        return (0.0, 0.0);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let (slope, icpt) = if sxx > 1e-12 * mx.abs().max(1.0) {
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxy / sxx, my - sxy / sxx * mx)
    } else if mx != 0.0 {
        (my / mx, 0.0)
    } else {
        (0.0, my)
    };
    let res = (pts.iter().map(|p| (p.1 - slope * p.0 - icpt).powi(2)).sum::<f64>() / m).sqrt();
    (slope, res)
}

/// Empirical `p -> p` bounds of the semigroup and its gradient family.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentEstimate {
    pub label: &'static str,
    pub p_grid: Vec<f64>,
    pub sup_semigroup: Vec<f64>,
    pub sup_gradient: Vec<f64>,
    pub threshold: f64,
    /// Widest contiguous stretch of `p_grid` where the semigroup sup stays under the threshold.
    pub p_interval: Option<(f64, f64)>,
    /// Same for `sqrt t grad e^{-tL}`, relative to its `p = 2` value.
    pub q_interval: Option<(f64, f64)>,
    pub candidate: ExponentProfile,
    pub notes: String,
}

fn lp(v: &[C64], p: f64) -> f64 {
    v.iter().map(|z| z.norm().powf(p)).sum::<f64>().powf(1.0 / p)
}

fn lp_vec(v: &[C64], comps: usize, p: f64) -> f64 {
    v.chunks(comps)
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

fn widest(ok: &[bool]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for i in 0..=ok.len() {
        if i < ok.len() && ok[i] {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            let len = i - s;
            if best.is_none_or(|(a, b)| b - a + 1 < len) {
                best = Some((s, i - 1));
            }
        }
    }
    best
}

pub fn estimate_exponents(
    gen: &DiscreteGenerator,
    p_grid: &[f64],
    t_ladder: &[f64],
    trials: usize,
    blowup: f64,
    rng: &mut impl Rng,
) -> Result<ExponentEstimate, OperatorError> {
    let g = gen.grid();
    let n = g.n;
    let p_grid: Vec<f64> = p_grid.iter().copied().filter(|&p| p > 1.0 && p.is_finite()).collect();
    let mut fields: Vec<SpatialField> = Vec::new();
    for i in 0..trials {
        fields.push(match i % 3 {
            0 => families::spike(g, rng.random_range(0..g.cells())),
            1 => families::band_limited(g, 1 + i % 7, rng),
            _ => {
                let mut f = SpatialField::zeros(g, 1);
                for z in f.data.iter_mut() {
                    *z = C64::new(if rng.random_bool(0.5) { 1.0 } else { -1.0 }, 0.0);
                }
                f
            }
        });
    }
    let mut sup_s = vec![0.0f64; p_grid.len()];
    let mut sup_g = vec![0.0f64; p_grid.len()];
    for f in &fields {
        for &t in t_ladder {
            let u = semigroup(gen, f, t)?;
            let gu = grad_h(&u);
            for (i, &p) in p_grid.iter().enumerate() {
                let base = lp(&f.data, p);
                if base == 0.0 {
                    continue;
                }
                sup_s[i] = sup_s[i].max(lp(&u.data, p) / base);
                sup_g[i] = sup_g[i].max(t.sqrt() * lp_vec(&gu.data, n, p) / base);
            }
        }
    }
    let threshold = blowup;
    let ok_s: Vec<bool> = sup_s.iter().map(|&v| v <= threshold).collect();
    let g2 = p_grid
        .iter()
        .position(|&p| (p - 2.0).abs() < 1e-12)
        .map(|i| sup_g[i])
        .unwrap_or_else(|| sup_g.iter().cloned().fold(f64::INFINITY, f64::min));
    let ok_g: Vec<bool> = sup_g.iter().map(|&v| v <= blowup * g2).collect();
    let p_int = widest(&ok_s).map(|(a, b)| (p_grid[a], p_grid[b]));
    let q_int = widest(&ok_g).map(|(a, b)| (p_grid[a], p_grid[b]));
    let nn = n as f64;
    let lo_default = nn / (nn + 1.0);
    let p_minus = match p_int {
        Some((lo, _)) if lo > p_grid[0] => lo.min(2.0 * nn / (nn + 2.0) - 1e-9).max(lo_default),
        _ => lo_default,
    };
    let q_plus = match q_int {
        Some((_, hi)) if hi < *p_grid.last().unwrap_or(&f64::INFINITY) => Ext::Finite(hi.max(2.0 + 1e-9)),
        _ => Ext::Inf,
    };
    let candidate = ExponentProfile::new_unchecked(n as u32, p_minus, q_plus, p_minus, q_plus);
    Ok(ExponentEstimate {
        label: "EMPIRICAL/indicative-only",
        p_grid,
        sup_semigroup: sup_s,
        sup_gradient: sup_g,
        threshold,
        p_interval: p_int,
        q_interval: q_int,
        candidate,
        notes: "p <= 1 (Hardy-space range) is not probed; torus truncation cannot certify p_+-(L)".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{band_limited, rng};
    use crate::grid::pair;
    use proptest::prelude::*;

    fn g1(nn: usize) -> GridSpec {
        let p = nn as f64;
        GridSpec::new(1, p, nn, 1.0, p * p / 512.0, 16).unwrap()
    }

    fn g2() -> GridSpec {
        GridSpec::new(2, 32.0, 32, 1.0, 4.0, 9).unwrap()
    }

    fn rel(a: &[C64], b: &[C64]) -> f64 {
        let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        vnorm(&d) / vnorm(b).max(1e-300)
    }

    #[test]
    fn identity_is_the_standard_laplacian() {
        for g in [g1(64), g2()] {
            let gen = assemble(&CoefficientField::identity(g)).unwrap();
            let l = gen.dense();
            let h2 = g.h() * g.h();
            for x in 0..g.cells() {
                for y in 0..g.cells() {
                    let mut want = 0.0;
                    if x == y {
                        want = 2.0 * g.n as f64 / h2;
                    }
                    for a in 0..g.n {
                        if g.shift(x, a, 1) == y || g.shift(x, a, -1) == y {
                            want -= 1.0 / h2;
                        }
                    }
                    assert!((l[(x, y)] - C64::new(want, 0.0)).norm() < 1e-12, "{x} {y}");
                }
            }
        }
    }

    #[test]
    fn mode_eigenvalue() {
        let g = g2();
        let gen = assemble(&CoefficientField::identity(g)).unwrap();
        let w = 2.0 * std::f64::consts::PI / g.period;
        let k = [3.0 * w, -5.0 * w];
        let f = SpatialField::from_fn(g, 1, |x, _| C64::from_polar(1.0, k[0] * x[0] + k[1] * x[1]));
        let lf = gen.apply(&f.data);
        let s = discrete_symbol(&g, k);
        let want: Vec<C64> = f.data.iter().map(|z| z * s).collect();
        assert!(rel(&lf, &want) < 1e-12);
    }

    #[test]
    fn hermitian_assembly_is_exact() {
        for g in [g1(64), g2()] {
            let c = Preset::RandomContrast { contrast: 100.0, block: 3, seed: 9 }.build(g).unwrap();
            let gen = assemble(&c).unwrap();
            assert!(gen.hermitian);
            let l = gen.dense();
            let scale = gen.gershgorin();
            assert!((l - l.adjoint()).iter().all(|z| z.norm() <= 1e-14 * scale));
            let ones = vec![ONE; g.cells()];
            assert!(gen.apply(&ones).iter().all(|z| z.norm() <= 1e-14 * scale));
        }
    }

    #[test]
    fn presets_round_trip_through_tkf1() {
        for g in [g1(64), g2()] {
            for p in Preset::catalog() {
                let c = p.build(g).unwrap();
                let mut buf = Vec::new();
                c.save_tkf1(&mut buf).unwrap();
                let back = CoefficientField::load_tkf1(g, &buf[..]).unwrap();
                assert_eq!(back.a, c.a);
            }
        }
    }

    #[test]
    fn ellipticity_violation_is_rejected() {
        let g = g1(64);
        let mut a = vec![identity_mat(); g.cells()];
        a[3][0][0] = C64::new(-0.1, 0.0);
        assert!(CoefficientField::new(g, a).is_err());
        assert!(Preset::ComplexPerturbation { kappa: 1.5, block: 2, seed: 1 }.build(g).is_err());
    }

    #[test]
    fn semigroup_trivia() {
        let g = g1(64);
        let c = Preset::Checkerboard { low: 1.0, high: 5.0, block: 4 }.build(g).unwrap();
        let gen = assemble(&c).unwrap();
        let f = band_limited(g, 5, &mut rng(1));
        assert_eq!(semigroup(&gen, &f, 0.0).unwrap(), f);
        assert!(semigroup(&gen, &f, -1.0).is_err());
        assert!(grad_semigroup(&gen, &f, 0.0).is_err());
        let one = SpatialField::constant(g, ONE);
        for t in [0.5, 3.0, 7.9] {
            let u = semigroup(&gen, &one, t).unwrap();
            assert!(u.data.iter().all(|z| (z - ONE).norm() < 1e-12));
            assert!(grad_semigroup(&gen, &one, t).unwrap().data.iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn engines_agree_with_dense() {
        let g = g1(64);
        let f = band_limited(g, 6, &mut rng(4));
        let g0 = band_limited(g, 3, &mut rng(5));
        let g1v = band_limited(g, 4, &mut rng(6));
        let g2 = band_limited(g, 2, &mut rng(8));
        for (preset, engine) in [
            (Preset::Identity, Engine::Spectral),
            (Preset::Checkerboard { low: 1.0, high: 5.0, block: 4 }, Engine::Chebyshev),
            (Preset::ComplexPerturbation { kappa: 0.5, block: 4, seed: 2 }, Engine::Taylor),
            (Preset::RandomContrast { contrast: 100.0, block: 4, seed: 2 }, Engine::Taylor),
        ] {
            let c = preset.build(g).unwrap();
            let dense = assemble(&c).unwrap().with_engine(Engine::Dense);
            let fast = assemble(&c).unwrap().with_engine(engine);
            for tau in [0.3, 2.5] {
                let src: [&[C64]; 3] = [&g0.data, &g1v.data, &g2.data];
                let a = dense.step(tau, &f.data, &src).unwrap();
                let b = fast.step(tau, &f.data, &src).unwrap();
                assert!(rel(&b, &a) < 1e-10, "{preset:?} {engine:?} tau={tau}: {}", rel(&b, &a));
                let a = dense.step(tau, &f.data, &[]).unwrap();
                let b = fast.step(tau, &f.data, &[]).unwrap();
                assert!(rel(&b, &a) < 1e-10, "{preset:?} {engine:?} tau={tau}: {}", rel(&b, &a));
            }
        }
    }

    #[test]
    fn constant_source_integrates_to_t() {
        let g = g1(64);
        let c = Preset::ComplexPerturbation { kappa: 0.5, block: 4, seed: 2 }.build(g).unwrap();
        let gen = assemble(&c).unwrap();
        let zero = vec![ZERO; g.cells()];
        let one = vec![ONE; g.cells()];
        let y = gen.step(2.0, &zero, &[&one]).unwrap();
        assert!(y.iter().all(|z| (z - 2.0).norm() < 1e-12));
        // int_0^2 (1 + 3 s - s^2) ds = 2 + 6 - 8/3
        let three = vec![C64::new(3.0, 0.0); g.cells()];
        let minus = vec![-ONE; g.cells()];
        let y = gen.step(2.0, &one, &[&one, &three, &minus]).unwrap();
        assert!(y.iter().all(|z| (z - (1.0 + 8.0 - 8.0 / 3.0)).norm() < 1e-12));
        assert!(gen.step(1.0, &one, &[&one, &one, &one, &one, &one]).is_err());
    }

    #[test]
    fn phi_functions_are_continuous_across_the_series_switch() {
        for k in 0..4 {
            let below = phi(1.0 - 1e-12, k);
            let above = phi(1.0, k);
            assert!((below - above).abs() < 1e-12 * above.abs(), "k={k}");
        }
        assert!((phi(2.0, 1) - (1.0 - (-2.0f64).exp()) / 2.0).abs() < 1e-15);
        assert!((phi(0.0, 3) - 1.0 / 6.0).abs() < 1e-16);
        assert!((phi(50.0, 2) - (49.0 + (-50.0f64).exp()) / 2500.0).abs() < 1e-15);
    }

    #[test]
    fn accretivity() {
        let g = g2();
        let c = Preset::ComplexPerturbation { kappa: 0.5, block: 2, seed: 3 }.build(g).unwrap();
        let gen = assemble(&c).unwrap();
        let mut r = rng(7);
        for _ in 0..100 {
            let f = band_limited(g, 5, &mut r);
            let lf = gen.apply_field(&f);
            let lhs = pair(&lf, &f).unwrap().re;
            let gf = grad_h(&f);
            let rhs = c.lambda0 * pair(&gf, &gf).unwrap().re;
            assert!(lhs >= rhs - 1e-9 * rhs.abs());
        }
    }

    #[test]
    fn offdiagonal_decay_for_identity() {
        let g = g1(128);
        let gen = assemble(&CoefficientField::identity(g)).unwrap();
        let t: f64 = 4.0;
        let sep = (16.0 * t).sqrt();
        let rec = offdiagonal_probe(&gen, t, sep, 6, &mut rng(3)).unwrap();
        for (x, nrm) in &rec.samples {
            assert!(*x >= 16.0 - 1e-9);
            assert!(*nrm <= (-0.1 * 16.0f64).exp());
        }
        let far = offdiagonal_probe(&gen, t, 2.0 * sep, 6, &mut rng(3)).unwrap();
        assert!(far.mean_norm < rec.mean_norm);
        let near = offdiagonal_probe(&gen, t, 2.0 * g.h(), 4, &mut rng(3)).unwrap();
        assert!(near.samples.iter().all(|s| s.1 <= 1.0 + 1e-12));
        assert!(offdiagonal_probe(&gen, t, 0.0, 1, &mut rng(3)).is_err());
    }

    #[test]
    fn exponent_probe_for_laplacian() {
        let g = g1(64);
        let gen = assemble(&CoefficientField::identity(g)).unwrap();
        let ps = [1.25, 1.5, 2.0, 3.0, 6.0];
        let est = estimate_exponents(&gen, &ps, &[1.0, 4.0], 6, 4.0, &mut rng(1)).unwrap();
        assert_eq!(est.p_interval, Some((1.25, 6.0)));
        assert_eq!(est.candidate.q_plus_l, Ext::Inf);
        let qi = est.q_interval.unwrap();
        assert!(qi.0 >= 1.25 && qi.1 <= 6.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn semigroup_law(a in 0.1f64..3.0, b in 0.1f64..3.0, seed in 0u64..100) {
            let g = g1(64);
            let c = Preset::RandomContrast { contrast: 20.0, block: 3, seed }.build(g).unwrap();
            let gen = assemble(&c).unwrap();
            let f = band_limited(g, 6, &mut rng(seed));
            let two = semigroup(&gen, &semigroup(&gen, &f, a).unwrap(), b).unwrap();
            let one = semigroup(&gen, &f, a + b).unwrap();
            prop_assert!(rel(&two.data, &one.data) < 1e-9);
        }
    }
}
