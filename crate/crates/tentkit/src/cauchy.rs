//! Solution operators of the Cauchy problem `du/dt + Lu = f + div F`,
//! `u(0) = u0`: semigroup propagation, the Lions and source Duhamel integrals,
//! weak-formulation residuals and the energy-inequality checks.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::exponents::Ext;
use crate::families;
use crate::funcspaces::{slice_norm, tent_norm, FuncSpaceError, SliceOrder, TentNormSpec};
use crate::grid::{div_h, grad_h, pair, trapezoid_weights, GridError, GridSpec, SpaceTimeField, SpatialField};
use crate::operator::{semigroup, DiscreteGenerator, OperatorError, MAX_SOURCE_DEGREE};
use crate::C64;

use rand::Rng;

#[derive(Debug, Error)]
pub enum CauchyError {
    #[error("missing data: {0}")]
    Missing(&'static str),
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error("test bank is empty")]
    EmptyBank,
    #[error("geometry out of range: {0}")]
    Geometry(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    FuncSpace(#[from] FuncSpaceError),
}

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Integration nodes: `0`, a geometric run below `t_min`, then the ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeNodes {
    pub t: Vec<f64>,
    pub first_ladder: usize,
}

impl TimeNodes {
    /// Continues the ladder ratio down `max(4, m/2)` octaves below `t_min`,
    /// `m` being the levels per octave.
    pub fn for_grid(grid: &GridSpec) -> Self {
        let rho = grid.rho();
        let per_octave = (2f64.ln() / rho.ln()).round().max(1.0) as usize;
        let pre = (per_octave / 2).max(4) * per_octave;
        let mut t = vec![0.0];
        for j in (1..=pre).rev() {
            t.push(grid.t_min * rho.powi(-(j as i32)));
        }
        let first_ladder = t.len();
        t.extend(grid.times());
        Self { t, first_ladder }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Values at every [`TimeNodes`] node, laid out like [`SpaceTimeField`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodeField {
    pub grid: GridSpec,
    pub comps: usize,
    pub nodes: TimeNodes,
    pub data: Vec<C64>,
}

impl NodeField {
    pub fn zeros(grid: GridSpec, comps: usize) -> Self {
        let nodes = TimeNodes::for_grid(&grid);
        let data = vec![ZERO; nodes.len() * grid.cells() * comps];
        Self { grid, comps, nodes, data }
    }

    pub fn from_fn(grid: GridSpec, comps: usize, f: impl Fn(f64, [f64; 2], usize) -> C64 + Sync) -> Self {
        let mut out = Self::zeros(grid, comps);
        let len = out.level_len();
        let ts = out.nodes.t.clone();
        out.data.par_chunks_mut(len).zip(ts.par_iter()).for_each(|(lvl, &t)| {
            for c in 0..grid.cells() {
                let x = grid.position(c);
                for a in 0..comps {
                    lvl[c * comps + a] = f(t, x, a);
                }
            }
        });
        out
    }

    /// Ladder values, zero at the nodes below `t_min`.
    pub fn from_ladder(field: &SpaceTimeField) -> Self {
        let mut out = Self::zeros(field.grid, field.comps);
        let len = out.level_len();
        let start = out.nodes.first_ladder * len;
        out.data[start..].copy_from_slice(&field.data);
        out
    }

    pub fn from_levels(grid: GridSpec, levels: Vec<SpatialField>) -> Result<Self, CauchyError> {
        let nodes = TimeNodes::for_grid(&grid);
        if levels.len() != nodes.len() {
            return Err(CauchyError::Mismatch(format!("{} levels for {} nodes", levels.len(), nodes.len())));
        }
        let comps = levels.first().map_or(1, |l| l.comps);
        let mut data = Vec::with_capacity(nodes.len() * grid.cells() * comps);
        for l in levels {
            if l.comps != comps || !l.grid.same_space(&grid) {
                return Err(CauchyError::Mismatch("levels on different grids".into()));
            }
            data.extend(l.data);
        }
        Ok(Self { grid, comps, nodes, data })
    }

    pub fn level_len(&self) -> usize {
        self.grid.cells() * self.comps
    }

    pub fn level(&self, k: usize) -> &[C64] {
        let len = self.level_len();
        &self.data[k * len..(k + 1) * len]
    }

    pub fn level_field(&self, k: usize) -> SpatialField {
        SpatialField {
            grid: self.grid,
            comps: self.comps,
            data: self.level(k).to_vec(),
        }
    }

    pub fn ladder(&self) -> SpaceTimeField {
        let start = self.nodes.first_ladder * self.level_len();
        SpaceTimeField {
            grid: self.grid,
            comps: self.comps,
            data: self.data[start..].to_vec(),
        }
    }

    /// Applies `f` level by level.
    pub fn map(&self, f: impl Fn(&SpatialField) -> SpatialField + Sync) -> NodeField {
        let levels: Vec<SpatialField> = (0..self.nodes.len())
            .into_par_iter()
            .map(|k| f(&self.level_field(k)))
            .collect();
        let comps = levels.first().map_or(self.comps, |l| l.comps);
        let mut data = Vec::with_capacity(self.nodes.len() * self.grid.cells() * comps);
        for l in levels {
            data.extend(l.data);
        }
        NodeField {
            grid: self.grid,
            comps,
            nodes: self.nodes.clone(),
            data,
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Self {
        assert_eq!(self.data.len(), other.data.len(), "node fields of different shapes");
        Self {
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
            ..self.clone()
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            data: self.data.iter().map(|z| z * s).collect(),
            ..self.clone()
        }
    }

    /// `L^2(dt dx)` over all nodes, trapezoid in `t`.
    pub fn l2_dt_norm(&self) -> f64 {
        let w = trapezoid_weights(&self.nodes.t);
        let vol = self.grid.cell_volume();
        (0..self.nodes.len())
            .map(|k| w[k] * vol * self.level(k).iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

/// Data of `du/dt + Lu = f + div F`, `u(0) = u0`. Absent parts are zero.
#[derive(Debug, Clone)]
pub struct CauchyProblem<'g> {
    pub generator: &'g DiscreteGenerator,
    pub u0: Option<SpatialField>,
    pub big_f: Option<NodeField>,
    pub f: Option<NodeField>,
}

impl<'g> CauchyProblem<'g> {
    pub fn new(generator: &'g DiscreteGenerator) -> Self {
        Self {
            generator,
            u0: None,
            big_f: None,
            f: None,
        }
    }

    pub fn with_u0(mut self, u0: SpatialField) -> Self {
        self.u0 = Some(u0);
        self
    }

    pub fn with_div_source(mut self, big_f: NodeField) -> Self {
        self.big_f = Some(big_f);
        self
    }

    pub fn with_source(mut self, f: NodeField) -> Self {
        self.f = Some(f);
        self
    }

    pub fn grid(&self) -> GridSpec {
        self.generator.grid()
    }

    pub fn is_trivial(&self) -> bool {
        let zero = |d: &[C64]| d.iter().all(|z| *z == ZERO);
        self.u0.as_ref().is_none_or(|u| zero(&u.data))
            && self.big_f.as_ref().is_none_or(|u| zero(&u.data))
            && self.f.as_ref().is_none_or(|u| zero(&u.data))
    }

    pub fn validate(&self) -> Result<(), CauchyError> {
        let g = self.grid();
        let n = g.n;
        let check = |grid: &GridSpec, comps: usize, want: usize, what: &str| {
            if !grid.same_space(&g) || *grid != g || comps != want {
                Err(CauchyError::Mismatch(format!("{what} does not live on the generator grid with {want} components")))
            } else {
                Ok(())
            }
        };
        if let Some(u) = &self.u0 {
            check(&u.grid, u.comps, 1, "u0")?;
        }
        if let Some(v) = &self.big_f {
            check(&v.grid, v.comps, n, "F")?;
        }
        if let Some(v) = &self.f {
            check(&v.grid, v.comps, 1, "f")?;
        }
        Ok(())
    }

    fn zero_nodes(&self, comps: usize) -> NodeField {
        NodeField::zeros(self.grid(), comps)
    }
}

/// `e^{-tL} u0` at every node.
pub fn propagate_nodes(gen: &DiscreteGenerator, u0: &SpatialField) -> Result<NodeField, CauchyError> {
    let nodes = TimeNodes::for_grid(&gen.grid());
    let levels: Result<Vec<SpatialField>, OperatorError> =
        nodes.t.par_iter().map(|&t| semigroup(gen, u0, t)).collect();
    NodeField::from_levels(gen.grid(), levels?)
}

/// Monomial coefficients of the Lagrange basis through `x`:
/// the interpolant of `(x_j, g_j)` is `sum_k (sum_j w[k][j] g_j) s^k`.
fn lagrange_weights(x: &[f64]) -> Vec<Vec<f64>> {
    let m = x.len();
    let mut w = vec![vec![0.0; m]; m];
    for j in 0..m {
        // expand prod_{i != j} (s - x_i) / (x_j - x_i)
        let mut poly = vec![1.0];
        let mut denom = 1.0;
        for (i, &xi) in x.iter().enumerate() {
            if i == j {
                continue;
            }
            let mut next = vec![0.0; poly.len() + 1];
            for (k, &c) in poly.iter().enumerate() {
                next[k + 1] += c;
                next[k] -= c * xi;
            }
            poly = next;
            denom *= x[j] - xi;
        }
        for k in 0..m {
            w[k][j] = poly[k] / denom;
        }
    }
    w
}

/// Nodes used to interpolate the source on slab `[t_i, t_{i+1}]`: the two
/// slab ends and their neighbours, shifted inwards at the ends of the run.
fn stencil(i: usize, len: usize) -> Vec<usize> {
    let width = (MAX_SOURCE_DEGREE + 1).min(len);
    let lo = (i + 2).saturating_sub(width / 2 + 1).min(len - width);
    (lo..lo + width).collect()
}

/// `int_0^t e^{-(t-s)L} g(s) ds` at every node, for a scalar source known at
/// the nodes. Each slab uses the exact exponential integral of the cubic
/// interpolant through the slab ends and their neighbours.
pub fn duhamel_nodes(gen: &DiscreteGenerator, g: &NodeField) -> Result<NodeField, CauchyError> {
    if g.comps != 1 {
        return Err(CauchyError::Mismatch(format!("scalar source expected, got {} components", g.comps)));
    }
    let ts = &g.nodes.t;
    let cells = g.grid.cells();
    let mut data = vec![ZERO; g.data.len()];
    let mut u = vec![ZERO; cells];
    for i in 0..ts.len() - 1 {
        let tau = ts[i + 1] - ts[i];
        let idx = stencil(i, ts.len());
        let x: Vec<f64> = idx.iter().map(|&j| ts[j] - ts[i]).collect();
        let w = lagrange_weights(&x);
        let a: Vec<Vec<C64>> = w
            .iter()
            .map(|wk| {
                let mut v = vec![ZERO; cells];
                for (&node, &c) in idx.iter().zip(wk) {
                    for (o, z) in v.iter_mut().zip(g.level(node)) {
                        *o += z * c;
                    }
                }
                v
            })
            .collect();
        // trailing zero terms cost a full polynomial fit each on long slabs
        let used = a.iter().rposition(|v| v.iter().any(|z| *z != ZERO)).map_or(0, |k| k + 1);
        let src: Vec<&[C64]> = a[..used].iter().map(|v| v.as_slice()).collect();
        u = gen.step(tau, &u, &src)?;
        data[(i + 1) * cells..(i + 2) * cells].copy_from_slice(&u);
    }
    Ok(NodeField {
        grid: g.grid,
        comps: 1,
        nodes: g.nodes.clone(),
        data,
    })
}

/// Lions' operator `int_0^t e^{-(t-s)L} div F(s) ds` at every node.
pub fn lions_nodes(gen: &DiscreteGenerator, big_f: &NodeField) -> Result<NodeField, CauchyError> {
    duhamel_nodes(gen, &big_f.map(div_h))
}

pub fn propagate(problem: &CauchyProblem) -> Result<SpaceTimeField, CauchyError> {
    problem.validate()?;
    let u0 = problem.u0.as_ref().ok_or(CauchyError::Missing("u0"))?;
    propagate_ladder(problem.generator, u0)
}

/// `e^{-tL} u0` at the ladder times only.
pub fn propagate_ladder(gen: &DiscreteGenerator, u0: &SpatialField) -> Result<SpaceTimeField, CauchyError> {
    let g = gen.grid();
    let levels: Result<Vec<SpatialField>, OperatorError> = g.times().par_iter().map(|&t| semigroup(gen, u0, t)).collect();
    Ok(SpaceTimeField::from_levels(g, &levels?)?)
}

pub fn lions_op(problem: &CauchyProblem) -> Result<SpaceTimeField, CauchyError> {
    problem.validate()?;
    let big_f = problem.big_f.as_ref().ok_or(CauchyError::Missing("F"))?;
    Ok(lions_nodes(problem.generator, big_f)?.ladder())
}

/// `grad` of Lions' operator, levelwise.
pub fn lions_grad_op(problem: &CauchyProblem) -> Result<SpaceTimeField, CauchyError> {
    problem.validate()?;
    let big_f = problem.big_f.as_ref().ok_or(CauchyError::Missing("F"))?;
    Ok(lions_nodes(problem.generator, big_f)?.map(grad_h).ladder())
}

pub fn source_op(problem: &CauchyProblem) -> Result<SpaceTimeField, CauchyError> {
    problem.validate()?;
    let f = problem.f.as_ref().ok_or(CauchyError::Missing("f"))?;
    Ok(duhamel_nodes(problem.generator, f)?.ladder())
}

/// Duhamel's formula: the sum of the three sweeps, in the order u0, F, f.
pub fn solve_nodes(problem: &CauchyProblem) -> Result<NodeField, CauchyError> {
    problem.validate()?;
    let gen = problem.generator;
    let mut u = problem.zero_nodes(1);
    if let Some(u0) = &problem.u0 {
        u = u.add(&propagate_nodes(gen, u0)?);
    }
    if let Some(big_f) = &problem.big_f {
        u = u.add(&lions_nodes(gen, big_f)?);
    }
    if let Some(f) = &problem.f {
        u = u.add(&duhamel_nodes(gen, f)?);
    }
    Ok(u)
}

pub fn solve(problem: &CauchyProblem) -> Result<SpaceTimeField, CauchyError> {
    Ok(solve_nodes(problem)?.ladder())
}

/// `sup_t ||u(t)||_2 + ||grad u||_{L^2} <= C (||u0||_2 + ||F||_{L^2})`.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyRecord {
    pub sup_u: f64,
    pub grad_l2: f64,
    pub data: f64,
    pub constant: f64,
}

pub fn energy_estimate(u: &NodeField, problem: &CauchyProblem) -> EnergyRecord {
    let sup_u = (0..u.nodes.len())
        .map(|k| u.level_field(k).l2_norm())
        .fold(0.0, f64::max);
    let grad_l2 = u.map(grad_h).l2_dt_norm();
    let data = problem.u0.as_ref().map_or(0.0, |v| v.l2_norm()) + problem.big_f.as_ref().map_or(0.0, |v| v.l2_dt_norm());
    EnergyRecord {
        sup_u,
        grad_l2,
        data,
        constant: if data > 0.0 { (sup_u + grad_l2) / data } else { 0.0 },
    }
}

fn bump(z: f64) -> f64 {
    if z.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - z * z)).exp()
    }
}

// (1 - z^2)^10 in log t: trapezoid sums of it converge far faster than for the mollifier.
const TIME_BUMP_POWER: i32 = 10;

fn time_bump(z: f64) -> f64 {
    if z.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - z * z).powi(TIME_BUMP_POWER)
    }
}

fn time_bump_prime(z: f64) -> f64 {
    if z.abs() >= 1.0 {
        0.0
    } else {
        -2.0 * TIME_BUMP_POWER as f64 * z * (1.0 - z * z).powi(TIME_BUMP_POWER - 1)
    }
}

/// `phi(t, x) = psi((ln t - c)/w) eta(|x - x0|/r)`: `psi(z) = (1 - z^2)^10`, `eta` the standard mollifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestFunction {
    pub log_center: f64,
    pub log_halfwidth: f64,
    pub center: [f64; 2],
    pub radius: f64,
}

pub const BANK_SIZE: usize = 12;
pub const BANK_SEED: u64 = 0x7e57;

impl TestFunction {
    pub fn time(&self, t: f64) -> f64 {
        time_bump((t.ln() - self.log_center) / self.log_halfwidth)
    }

    pub fn time_derivative(&self, t: f64) -> f64 {
        time_bump_prime((t.ln() - self.log_center) / self.log_halfwidth) / (self.log_halfwidth * t)
    }

    pub fn space(&self, grid: &GridSpec) -> SpatialField {
        SpatialField::from_fn(*grid, 1, |x, _| {
            let mut r2 = 0.0;
            for a in 0..grid.n {
                r2 += grid.displacement(x[a], self.center[a]).powi(2);
            }
            C64::new(bump(r2.sqrt() / self.radius), 0.0)
        })
    }
}

/// Test functions vanishing on the first and last two ladder levels.
pub fn test_bank(grid: &GridSpec, size: usize, seed: u64) -> Vec<TestFunction> {
    let ts = grid.times();
    let lo = ts[2.min(ts.len() - 1)].ln();
    let hi = ts[ts.len().saturating_sub(3)].ln();
    let span = (hi - lo).max(0.0);
    let mut rng = families::rng(seed);
    (0..size)
        .map(|_| {
            let w = span * rng.random_range(0.3..0.5);
            let c = rng.random_range(lo + w..=hi - w);
            let rmin = (4.0 * grid.h()).max(grid.period / 16.0);
            let radius = rng.random_range(rmin..=grid.period / 4.0);
            let center = [rng.random_range(0.0..grid.period), rng.random_range(0.0..grid.period)];
            TestFunction {
                log_center: c,
                log_halfwidth: w,
                center,
                radius,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakResidual {
    pub max: f64,
    pub per_test: Vec<f64>,
}

/// Residual of `-<u, d_t phi> + <A grad u, grad phi> - <f, phi> + <F, grad phi>`
/// summed over the ladder (trapezoid in `log t`). Each value is divided by the
/// parabolically scaled test-field norm
/// `int |d_t psi| |eta| + psi (1 + lambda_1) |grad eta| / sqrt t + psi |eta| / t dt`
/// and by the data scale `|u0| + sup sqrt(t) |F(t)| + sup t |f(t)|` (1 without data),
/// so the residual is linear in `u`.
pub fn weak_residual(
    u: &SpaceTimeField,
    problem: &CauchyProblem,
    bank: &[TestFunction],
) -> Result<WeakResidual, CauchyError> {
    if bank.is_empty() {
        return Err(CauchyError::EmptyBank);
    }
    problem.validate()?;
    let g = problem.grid();
    if u.grid != g || u.comps != 1 {
        return Err(CauchyError::Mismatch("u is not a scalar field on the problem grid".into()));
    }
    let gen = problem.generator;
    let ts = g.times();
    let lw = g.log_weights();
    let big_f = problem.big_f.as_ref().map(|v| v.ladder());
    let f = problem.f.as_ref().map(|v| v.ladder());
    let levels: Vec<(SpatialField, SpatialField)> = (0..ts.len())
        .into_par_iter()
        .map(|k| {
            let uk = u.level_field(k);
            let lu = gen.apply_field(&uk);
            (uk, lu)
        })
        .collect();
    let sup = |v: &Option<SpaceTimeField>, power: f64| {
        v.as_ref().map_or(0.0, |v| {
            (0..ts.len())
                .map(|k| ts[k].powf(power) * v.level_field(k).l2_norm())
                .fold(0.0, f64::max)
        })
    };
    let scale = problem.u0.as_ref().map_or(0.0, |v| v.l2_norm()) + sup(&big_f, 0.5) + sup(&f, 1.0);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let lambda1 = gen.coeff.lambda1;
    let per_test: Vec<f64> = bank
        .par_iter()
        .map(|phi| {
            let eta = phi.space(&g);
            let geta = grad_h(&eta);
            let (ne, nge) = (eta.l2_norm(), geta.l2_norm());
            let mut total = ZERO;
            let mut norm = 0.0;
            for k in 0..ts.len() {
                let (psi, dpsi) = (phi.time(ts[k]), phi.time_derivative(ts[k]));
                if psi == 0.0 && dpsi == 0.0 {
                    continue;
                }
                let w = lw[k] * ts[k];
                let (uk, lu) = &levels[k];
                let mut term = -pair(uk, &eta).expect("same grid") * dpsi + pair(lu, &eta).expect("same grid") * psi;
                if let Some(f) = &f {
                    term -= pair(&f.level_field(k), &eta).expect("same grid") * psi;
                }
                if let Some(big_f) = &big_f {
                    term += pair(&big_f.level_field(k), &geta).expect("same grid") * psi;
                }
                total += term * w;
                norm += w * (dpsi.abs() * ne + psi * (1.0 + lambda1) * nge / ts[k].sqrt() + psi * ne / ts[k]);
            }
            if norm > 0.0 {
                total.norm() / (norm * scale)
            } else {
                0.0
            }
        })
        .collect();
    Ok(WeakResidual {
        max: per_test.iter().cloned().fold(0.0, f64::max),
        per_test,
    })
}

/// Levels `a < c < b` on the ladder and a ball `B(center, radius)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CylinderGeometry {
    pub a: usize,
    pub c: usize,
    pub b: usize,
    pub center: usize,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaccioppoliRecord {
    pub geometry: CylinderGeometry,
    pub trace_lhs: f64,
    pub trace_rhs: f64,
    pub trace_constant: f64,
    pub grad_lhs: f64,
    pub grad_rhs: f64,
    pub grad_constant: f64,
    pub budget: f64,
    pub pass: bool,
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

/// Both local energy inequalities on `(a, b) x B`, as implied constants.
pub fn caccioppoli_check(
    u: &SpaceTimeField,
    problem: &CauchyProblem,
    geom: CylinderGeometry,
    budget: f64,
) -> Result<CaccioppoliRecord, CauchyError> {
    problem.validate()?;
    let g = problem.grid();
    let ts = g.times();
    let CylinderGeometry { a, c, b, center, radius } = geom;
    if !(a < c && c < b && b < ts.len()) {
        return Err(CauchyError::Geometry(format!("need a < c < b < {}, got {a}, {c}, {b}", ts.len())));
    }
    if 2.0 * radius > g.period / 2.0 {
        return Err(CauchyError::Geometry(format!("2B with radius {} does not fit the torus", 2.0 * radius)));
    }
    if center >= g.cells() {
        return Err(CauchyError::Geometry(format!("center cell {center} out of range")));
    }
    let ball = g.ball(radius)?;
    let ball2 = g.ball(2.0 * radius)?;
    let vol = g.cell_volume();
    let local = |data: &[C64], comps: usize, st: &crate::grid::BallStencil| {
        let mut s = 0.0;
        st.for_each(center, |cell| {
            for q in 0..comps {
                s += data[cell * comps + q].norm_sqr();
            }
        });
        s * vol
    };
    let seg = &ts[a..=b];
    let w = trapezoid_weights(seg);
    let integral = |field: Option<&SpaceTimeField>| -> f64 {
        field.map_or(0.0, |fld| {
            (a..=b)
                .map(|k| w[k - a] * local(fld.level(k), fld.comps, &ball2))
                .sum()
        })
    };
    let big_f = problem.big_f.as_ref().map(|v| v.ladder());
    let f = problem.f.as_ref().map(|v| v.ladder());
    let iu = integral(Some(u));
    let iff = integral(f.as_ref());
    let ibf = integral(big_f.as_ref());
    let r2 = radius * radius;
    let (ta, tb, tc) = (ts[a], ts[b], ts[c]);
    let trace_lhs = local(u.level(b), 1, &ball);
    let trace_rhs = (1.0 / r2 + 1.0 / (tb - ta)) * iu + r2 * iff + ibf;
    let wc = trapezoid_weights(&ts[c..=b]);
    let grad_lhs: f64 = (c..=b)
        .map(|k| wc[k - c] * local(&grad_h(&u.level_field(k)).data, g.n, &ball))
        .sum();
    let grad_rhs = (1.0 + (tb - ta) / r2) * iu / (tc - ta) + r2 * (tb - ta) / (tc - ta) * iff + (tb - ta) / (tc - ta) * ibf;
    let trace_constant = ratio(trace_lhs, trace_rhs);
    let grad_constant = ratio(grad_lhs, grad_rhs);
    Ok(CaccioppoliRecord {
        geometry: geom,
        trace_lhs,
        trace_rhs,
        trace_constant,
        grad_lhs,
        grad_rhs,
        grad_constant,
        budget,
        pass: trace_constant <= budget && grad_constant <= budget,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyTentRecord {
    pub beta: f64,
    pub p: Ext,
    pub grad_u: f64,
    pub u: f64,
    pub big_f: f64,
    pub f: f64,
    pub constant: f64,
    pub budget: f64,
    pub pass: bool,
}

/// `||grad u||_{T^p_{beta+1/2}}` against `||u||_{T^p_{beta+1}} + ||F||_{T^p_{beta+1/2}} + ||f||_{T^p_beta}`.
pub fn energy_tent_check(
    u: &SpaceTimeField,
    problem: &CauchyProblem,
    beta: f64,
    p: Ext,
    budget: f64,
) -> Result<EnergyTentRecord, CauchyError> {
    problem.validate()?;
    let g = u.grid;
    let levels: Vec<SpatialField> = (0..g.time_levels).map(|k| grad_h(&u.level_field(k))).collect();
    let gu = SpaceTimeField::from_levels(g, &levels)?;
    let grad_u = tent_norm(&gu, &TentNormSpec::new(beta + 0.5, p))?;
    let un = tent_norm(u, &TentNormSpec::new(beta + 1.0, p))?;
    let bf = match &problem.big_f {
        Some(v) => tent_norm(&v.ladder(), &TentNormSpec::new(beta + 0.5, p))?,
        None => 0.0,
    };
    let ff = match &problem.f {
        Some(v) => tent_norm(&v.ladder(), &TentNormSpec::new(beta, p))?,
        None => 0.0,
    };
    let constant = ratio(grad_u, un + bf + ff);
    Ok(EnergyTentRecord {
        beta,
        p,
        grad_u,
        u: un,
        big_f: bf,
        f: ff,
        constant,
        budget,
        pass: constant <= budget,
    })
}

/// Relative `L^2(dt dx)` ladder residuals of the three explicit formulae.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityRecord {
    /// `R^L(F) = R^{-Delta}((A - I) grad R^L(F) + F)`
    pub lions: Option<f64>,
    /// `E_L u0 = E_{-Delta} u0 + R^L((A - I) grad E_{-Delta} u0)`
    pub forward: Option<f64>,
    /// `E_L u0 = E_{-Delta} u0 + R^{-Delta}((A - I) grad E_L u0)`
    pub backward: Option<f64>,
}

impl IdentityRecord {
    pub fn max(&self) -> f64 {
        [self.lions, self.forward, self.backward]
            .into_iter()
            .flatten()
            .fold(0.0, f64::max)
    }
}

fn relative(lhs: &NodeField, rhs: &NodeField) -> f64 {
    let d = lhs.sub(rhs).ladder().l2_dt_norm();
    let s = lhs.ladder().l2_dt_norm();
    if s == 0.0 {
        d
    } else {
        d / s
    }
}

pub fn duhamel_identities(
    gen: &DiscreteGenerator,
    laplacian: &DiscreteGenerator,
    u0: Option<&SpatialField>,
    big_f: Option<&NodeField>,
) -> Result<IdentityRecord, CauchyError> {
    if gen.grid() != laplacian.grid() {
        return Err(CauchyError::Mismatch("generators on different grids".into()));
    }
    if !laplacian.identity {
        return Err(CauchyError::Mismatch("second generator must have A = I".into()));
    }
    let pert = |v: &NodeField| v.map(|l| gen.perturbation(&grad_h(l)));
    let lions = match big_f {
        Some(big_f) => {
            let lhs = lions_nodes(gen, big_f)?;
            let tilde = pert(&lhs).add(big_f);
            Some(relative(&lhs, &lions_nodes(laplacian, &tilde)?))
        }
        None => None,
    };
    let (forward, backward) = match u0 {
        Some(u0) => {
            let el = propagate_nodes(gen, u0)?;
            let eh = propagate_nodes(laplacian, u0)?;
            let fwd = eh.add(&lions_nodes(gen, &pert(&eh))?);
            let bwd = eh.add(&lions_nodes(laplacian, &pert(&el))?);
            (Some(relative(&el, &fwd)), Some(relative(&el, &bwd)))
        }
        None => (None, None),
    };
    Ok(IdentityRecord { lions, forward, backward })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TraceMode {
    /// Pairings against the spatial parts of the weak-residual bank.
    Pairing,
    Lp { p: Ext },
    SliceDiv { q: Ext, delta: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub mode: TraceMode,
    pub theory: &'static str,
    /// Ladder times, decreasing.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Least-squares slope of `ln value` against `ln t` over the smallest third of the ladder.
    pub rate: f64,
}

fn theory_row(mode: &TraceMode) -> &'static str {
    match mode {
        TraceMode::Pairing => "pairing surrogate for convergence in distributions",
        TraceMode::Lp { p: Ext::Finite(p) } if (1.0..=2.0).contains(p) => "L^p row (1 <= p <= 2)",
        TraceMode::Lp { .. } => "unverified-by-theory",
        TraceMode::SliceDiv { q: Ext::Inf, .. } => "E^{-1,q} row at q = inf: unverified-by-theory",
        TraceMode::SliceDiv { .. } => "E^{-1,q}_delta row",
    }
}

/// Distance of `u(t_k)` to `target` as `t_k` decreases.
pub fn trace_convergence(
    u: &SpaceTimeField,
    target: Option<&SpatialField>,
    mode: TraceMode,
) -> Result<TraceRecord, CauchyError> {
    let g = u.grid;
    let ts = g.times();
    let bank: Vec<SpatialField> = test_bank(&g, BANK_SIZE, BANK_SEED).iter().map(|t| t.space(&g)).collect();
    let values: Result<Vec<f64>, CauchyError> = (0..ts.len())
        .rev()
        .map(|k| {
            let mut d = u.level_field(k);
            if let Some(t) = target {
                d = d.sub(t);
            }
            Ok(match mode {
                TraceMode::Pairing => bank
                    .iter()
                    .map(|eta| pair(&d, eta).map(|z| z.norm()))
                    .collect::<Result<Vec<f64>, _>>()?
                    .into_iter()
                    .fold(0.0, f64::max),
                TraceMode::Lp { p: Ext::Inf } => d.data.iter().map(|z| z.norm()).fold(0.0, f64::max),
                TraceMode::Lp { p: Ext::Finite(p) } => d.lp_norm(p),
                TraceMode::SliceDiv { q, delta } => slice_norm(&d, q, delta, SliceOrder::Div)?.value,
            })
        })
        .collect();
    let values = values?;
    let times: Vec<f64> = ts.iter().rev().cloned().collect();
    let m = (ts.len() / 3).max(3).min(ts.len());
    let pts: Vec<(f64, f64)> = (ts.len() - m..ts.len())
        .filter(|&i| values[i] > 0.0)
        .map(|i| (times[i].ln(), values[i].ln()))
        .collect();
    let rate = if pts.len() >= 2 {
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    } else {
        0.0
    };
    Ok(TraceRecord {
        theory: theory_row(&mode),
        mode,
        times,
        values,
        rate,
    })
}

#[derive(Debug, Clone)]
pub struct EndpointRecord {
    pub field: SpaceTimeField,
    pub tent: f64,
    /// `||G f||_{T^2_0} / ||f||_2` at `p = 2`.
    pub ratio: Option<f64>,
}

/// `G(f)(t) = e^{-tL} div f` on the ladder and its `T^p_0` norm.
pub fn endpoint_divergence_semigroup(
    gen: &DiscreteGenerator,
    f: &SpatialField,
    p: Ext,
) -> Result<EndpointRecord, CauchyError> {
    let g = gen.grid();
    if f.comps != g.n || f.grid != g {
        return Err(CauchyError::Mismatch(format!("vector field with {} components expected", g.n)));
    }
    let d = div_h(f);
    let levels: Result<Vec<SpatialField>, OperatorError> =
        g.times().par_iter().map(|&t| semigroup(gen, &d, t)).collect();
    let field = SpaceTimeField::from_levels(g, &levels?)?;
    let tent = tent_norm(&field, &TentNormSpec::new(0.0, p))?;
    let ratio = match p {
        Ext::Finite(q) if q == 2.0 => {
            let nf = f.l2_norm();
            (nf > 0.0).then(|| tent / nf)
        }
        _ => None,
    };
    Ok(EndpointRecord { field, tent, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{band_limited, band_limited_vector, rng, BumpSource};
    use crate::operator::{assemble, CoefficientField, Preset};
    use crate::spectral::{discrete_symbol, heat_multiplier};

    fn grid(nn: usize, per_octave: usize) -> GridSpec {
        let p = nn as f64;
        let octaves = ((p / 16.0).powi(2) / 2.0).log2().floor() as usize;
        GridSpec::dyadic(1, p, nn, 2.0, octaves, per_octave).unwrap()
    }

    fn rel(a: &SpaceTimeField, b: &SpaceTimeField) -> f64 {
        a.sub(b).l2_dt_norm() / b.l2_dt_norm().max(1e-300)
    }

    #[test]
    fn nodes_continue_the_ladder() {
        let g = grid(128, 4);
        let nodes = TimeNodes::for_grid(&g);
        assert_eq!(nodes.t[0], 0.0);
        assert_eq!(nodes.first_ladder, 1 + 16);
        assert_eq!(&nodes.t[nodes.first_ladder..], &g.times()[..]);
        let r = nodes.t[2] / nodes.t[1];
        assert!((r - g.rho()).abs() < 1e-12);
    }

    #[test]
    fn lagrange_weights_reproduce_cubics() {
        let x = [-0.3, 0.0, 0.7, 1.1];
        let w = lagrange_weights(&x);
        let want = [2.0, -1.0, 0.5, 0.25];
        let g: Vec<f64> = x.iter().map(|s| want.iter().rev().fold(0.0, |acc, c| acc * s + c)).collect();
        for k in 0..4 {
            let a: f64 = (0..4).map(|j| w[k][j] * g[j]).sum();
            assert!((a - want[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn stencils_cover_the_slab() {
        for len in [2, 3, 4, 10] {
            for i in 0..len - 1 {
                let s = stencil(i, len);
                assert!(s.contains(&i) && s.contains(&(i + 1)) && *s.last().unwrap() < len);
            }
        }
        assert_eq!(stencil(5, 10), vec![4, 5, 6, 7]);
    }

    #[test]
    fn constants_propagate_and_integrate() {
        let g = grid(128, 4);
        let c = Preset::Checkerboard { low: 1.0, high: 5.0, block: 4 }.build(g).unwrap();
        let gen = assemble(&c).unwrap();
        let one = SpatialField::constant(g, C64::new(1.0, 0.0));
        let p = CauchyProblem::new(&gen).with_u0(one.clone());
        let u = propagate(&p).unwrap();
        assert!(u.data.iter().all(|z| (z - 1.0).norm() < 1e-12));
        let f = NodeField::from_fn(g, 1, |_, _, _| C64::new(1.0, 0.0));
        let p = CauchyProblem::new(&gen).with_source(f);
        let u = source_op(&p).unwrap();
        for (k, t) in g.times().iter().enumerate() {
            assert!(u.level(k).iter().all(|z| (z - t).norm() < 1e-10 * t));
        }
        // x-constant F has zero divergence
        let bf = NodeField::from_fn(g, 1, |t, _, _| C64::new(t.sin(), 0.0));
        let p = CauchyProblem::new(&gen).with_div_source(bf);
        assert!(lions_op(&p).unwrap().data.iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn zero_data_gives_zero() {
        let g = grid(64, 4);
        let gen = assemble(&CoefficientField::identity(g)).unwrap();
        let p = CauchyProblem::new(&gen)
            .with_u0(SpatialField::zeros(g, 1))
            .with_div_source(NodeField::zeros(g, 1))
            .with_source(NodeField::zeros(g, 1));
        assert!(p.is_trivial());
        assert!(solve(&p).unwrap().data.iter().all(|z| *z == ZERO));
        assert!(propagate(&CauchyProblem::new(&gen)).is_err());
    }

    #[test]
    fn heat_propagation_matches_the_dft() {
        let g = grid(128, 4);
        let gen = assemble(&CoefficientField::identity(g)).unwrap();
        let u0 = band_limited(g, 10, &mut rng(2));
        let u = propagate(&CauchyProblem::new(&gen).with_u0(u0.clone())).unwrap();
        for (k, &t) in g.times().iter().enumerate() {
            let want = crate::spectral::apply_multiplier(&u0, |xi| C64::new((-t * discrete_symbol(&g, xi)).exp(), 0.0));
            let got = u.level_field(k);
            assert!(got.sub(&want).l2_norm() <= 1e-9 * want.l2_norm());
        }
        let _ = heat_multiplier;
    }

    /// Single mode `F(s) = e^{i k x} s` (vector, n = 1): the exact Lions integral is
    /// `i D(k) e^{ikx} int_0^t e^{-(t-s) sigma} s ds` with `D` the divergence symbol.
    #[test]
    fn lions_single_mode_closed_form() {
        let g = grid(128, 4);
        let gen = assemble(&CoefficientField::identity(g)).unwrap();
        let k = 2.0 * std::f64::consts::PI * 5.0 / g.period;
        let bf = NodeField::from_fn(g, 1, |t, x, _| C64::from_polar(t, k * x[0]));
        let p = CauchyProblem::new(&gen).with_div_source(bf);
        let u = lions_op(&p).unwrap();
        let h = g.h();
        // backward difference symbol of div_h
        let dsym = (C64::new(1.0, 0.0) - C64::from_polar(1.0, -k * h)) / h;
        let sigma = discrete_symbol(&g, [k, 0.0]);
        let want = SpaceTimeField::from_fn(g, 1, |t, x, _| {
            let integral = (sigma * t - 1.0 + (-sigma * t).exp()) / (sigma * sigma);
            dsym * C64::from_polar(integral, k * x[0])
        });
        assert!(rel(&u, &want) < 1e-8, "{}", rel(&u, &want));
    }

    #[test]
    fn source_single_mode_closed_form() {
        let g = grid(128, 4);
        let gen = assemble(&CoefficientField::identity(g)).unwrap();
        let k = 2.0 * std::f64::consts::PI * 3.0 / g.period;
        let f = NodeField::from_fn(g, 1, |_, x, _| C64::from_polar(1.0, k * x[0]));
        let u = source_op(&CauchyProblem::new(&gen).with_source(f)).unwrap();
        let sigma = discrete_symbol(&g, [k, 0.0]);
        let want = SpaceTimeField::from_fn(g, 1, |t, x, _| C64::from_polar((1.0 - (-t * sigma).exp()) / sigma, k * x[0]));
        assert!(rel(&u, &want) < 1e-10);
    }

    fn smooth_problem<'g>(gen: &'g DiscreteGenerator, seed: u64) -> CauchyProblem<'g> {
        let g = gen.grid();
        let mut r = rng(seed);
        let bf = BumpSource::random(g, &mut r);
        let fs = BumpSource::random(g, &mut r);
        CauchyProblem::new(gen)
            .with_u0(band_limited(g, 4, &mut r))
            .with_div_source(NodeField::from_fn(g, g.n, |t, x, a| bf.eval(t, x, a)))
            .with_source(NodeField::from_fn(g, 1, |t, x, a| fs.eval(t, x, a)))
    }

    #[test]
    fn superposition_is_exact() {
        let g = grid(64, 4);
        let c = Preset::ComplexPerturbation { kappa: 0.5, block: 4, seed: 1 }.build(g).unwrap();
        let gen = assemble(&c).unwrap();
        let p = smooth_problem(&gen, 3);
        let all = solve(&p).unwrap();
        let a = solve(&CauchyProblem { big_f: None, f: None, ..p.clone() }).unwrap();
        let b = solve(&CauchyProblem { u0: None, f: None, ..p.clone() }).unwrap();
        let c = solve(&CauchyProblem { u0: None, big_f: None, ..p.clone() }).unwrap();
        assert_eq!(all, a.add(&b).add(&c));
    }

    #[test]
    fn gradient_identity() {
        let g = grid(128, 4);
        let c = Preset::Checkerboard { low: 1.0, high: 5.0, block: 4 }.build(g).unwrap();
        let gen = assemble(&c).unwrap();
        let p = smooth_problem(&gen, 5);
        let u = lions_op(&p).unwrap();
        let gu = lions_grad_op(&p).unwrap();
        let levels: Vec<SpatialField> = (0..g.time_levels).map(|k| grad_h(&u.level_field(k))).collect();
        let fd = SpaceTimeField::from_levels(g, &levels).unwrap();
        assert!(rel(&gu, &fd) <= 1e-6);
    }

    #[test]
    fn weak_residual_of_solutions() {
        let g = grid(128, 8);
        let c = Preset::Checkerboard { low: 1.0, high: 5.0, block: 4 }.build(g).unwrap();
        let gen = assemble(&c).unwrap();
        let p = smooth_problem(&gen, 11);
        let bank = test_bank(&g, BANK_SIZE, BANK_SEED);
        let u = solve(&p).unwrap();
        let r = weak_residual(&u, &p, &bank).unwrap();
        assert!(r.max <= 1e-4, "{}", r.max);
        assert!(weak_residual(&u, &p, &[]).is_err());
        // noise enters linearly
        let bump = band_limited(g, 3, &mut rng(99));
        let levels: Vec<SpatialField> = g.times().iter().map(|t| bump.scaled(C64::new(1.0 + t.ln().sin(), 0.0))).collect();
        let noise = SpaceTimeField::from_levels(g, &levels).unwrap();
        let r1 = weak_residual(&u.add(&noise.scaled(C64::new(1e-2, 0.0))), &p, &bank).unwrap().max;
        let r2 = weak_residual(&u.add(&noise.scaled(C64::new(2e-2, 0.0))), &p, &bank).unwrap().max;
        assert!(r1 > 10.0 * r.max && (r2 / r1 - 2.0).abs() < 0.1, "{r1} {r2}");
    }

    #[test]
    fn constants_are_exact_weak_solutions() {
        let g = grid(64, 8);
        let c = Preset::ComplexPerturbation { kappa: 0.5, block: 4, seed: 2 }.build(g).unwrap();
        let gen = assemble(&c).unwrap();
        let p = CauchyProblem::new(&gen);
        let u = SpaceTimeField::from_fn(g, 1, |_, _, _| C64::new(1.0, 0.0));
        let r = weak_residual(&u, &p, &test_bank(&g, BANK_SIZE, BANK_SEED)).unwrap();
        // only the time quadrature is left
        assert!(r.max < 1e-5, "{}", r.max);
    }

    #[test]
    fn identities_are_trivial_for_the_laplacian() {
        let g = grid(64, 4);
        let gen = assemble(&CoefficientField::identity(g)).unwrap();
        let lap = assemble(&CoefficientField::identity(g)).unwrap();
        let p = smooth_problem(&gen, 7);
        let rec = duhamel_identities(&gen, &lap, p.u0.as_ref(), p.big_f.as_ref()).unwrap();
        assert!(rec.max() <= 1e-9, "{rec:?}");
        let only_u0 = duhamel_identities(&gen, &lap, p.u0.as_ref(), None).unwrap();
        assert!(only_u0.lions.is_none() && only_u0.forward.is_some());
    }

    #[test]
    fn identities_for_rough_coefficients() {
        let g = grid(128, 8);
        let c = Preset::Checkerboard { low: 1.0, high: 5.0, block: 4 }.build(g).unwrap();
        let gen = assemble(&c).unwrap();
        let lap = assemble(&CoefficientField::identity(g)).unwrap();
        let p = smooth_problem(&gen, 7);
        let rec = duhamel_identities(&gen, &lap, p.u0.as_ref(), p.big_f.as_ref()).unwrap();
        assert!(rec.max() <= 1e-3, "{rec:?}");
        assert!(duhamel_identities(&gen, &gen, None, None).is_err());
    }

    #[test]
    fn energy_inequalities_for_constants() {
        let g = grid(64, 4);
        let gen = assemble(&CoefficientField::identity(g)).unwrap();
        let p = CauchyProblem::new(&gen);
        let u = SpaceTimeField::from_fn(g, 1, |_, _, _| C64::new(2.0, 0.0));
        let geom = CylinderGeometry { a: 2, c: 6, b: 12, center: 5, radius: 4.0 };
        let rec = caccioppoli_check(&u, &p, geom, 64.0).unwrap();
        assert_eq!(rec.grad_lhs, 0.0);
        assert!(rec.trace_constant <= 1.0 && rec.pass);
        let bad = CylinderGeometry { a: 10, c: 5, ..geom };
        assert!(caccioppoli_check(&u, &p, bad, 64.0).is_err());
        let zero = SpaceTimeField::zeros(g, 1);
        let rec = energy_tent_check(&zero, &p, -0.5, Ext::Finite(2.0), 64.0).unwrap();
        assert_eq!((rec.grad_u, rec.u, rec.constant), (0.0, 0.0, 0.0));
    }

    #[test]
    fn trace_of_the_semigroup() {
        let g = grid(256, 4);
        let gen = assemble(&CoefficientField::identity(g)).unwrap();
        let u0 = band_limited(g, 3, &mut rng(1));
        let u = propagate(&CauchyProblem::new(&gen).with_u0(u0.clone())).unwrap();
        let rec = trace_convergence(&u, Some(&u0), TraceMode::Pairing).unwrap();
        assert!(rec.values.windows(2).all(|w| w[1] <= w[0]));
        assert!(rec.rate >= 0.99, "{}", rec.rate);
        let c = SpatialField::constant(g, C64::new(0.5, 0.0));
        let off = trace_convergence(&u, Some(&u0.add(&c)), TraceMode::Pairing).unwrap();
        let bank: Vec<SpatialField> = test_bank(&g, BANK_SIZE, BANK_SEED).iter().map(|t| t.space(&g)).collect();
        let plateau = bank.iter().map(|e| pair(&c, e).unwrap().norm()).fold(0.0, f64::max);
        let last = *off.values.last().unwrap();
        assert!((last - plateau).abs() < 0.05 * plateau);
    }

    #[test]
    fn endpoint_quadratic_band() {
        let g = GridSpec::new(1, 512.0, 512, 2.0, 512.0, 33).unwrap();
        let gen = assemble(&CoefficientField::identity(g)).unwrap();
        let f = band_limited_vector(g, 40, &mut rng(5));
        let rec = endpoint_divergence_semigroup(&gen, &f, Ext::Finite(2.0)).unwrap();
        let r = rec.ratio.unwrap();
        assert!((0.25..=4.0).contains(&r), "{r}");
        let zero = SpatialField::zeros(g, 1);
        assert_eq!(endpoint_divergence_semigroup(&gen, &zero, Ext::Finite(2.0)).unwrap().tent, 0.0);
    }
}
