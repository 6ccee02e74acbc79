//! Torus discretization of `R^n` (n = 1, 2), the geometric time ladder, and the
//! field containers everything else works on.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::C64;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("grid mismatch: {0}")]
    Mismatch(String),
    #[error("ball radius {radius} is below half a cell width ({half_h})")]
    RadiusTooSmall { radius: f64, half_h: f64 },
    #[error("Whitney cube at t = {0} is outside the ladder")]
    CubeOutOfRange(f64),
    #[error("non-finite entry in field")]
    NonFinite,
    #[error("TKF1 format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Periodic grid on `[0, period)^n` with `points_per_axis` cells per axis and a
/// geometric ladder `t_k = t_min * rho^k`, `k = 0..time_levels`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub period: f64,
    pub points_per_axis: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub time_levels: usize,
}

const REL_SLACK: f64 = 1e-12;

impl GridSpec {
    pub fn new(
        n: usize,
        period: f64,
        points_per_axis: usize,
        t_min: f64,
        t_max: f64,
        time_levels: usize,
    ) -> Result<Self, GridError> {
        let g = Self {
            n,
            period,
            points_per_axis,
            t_min,
            t_max,
            time_levels,
        };
        g.validate()?;
        Ok(g)
    }

    /// Ladder with `per_octave` levels per doubling of `t`, spanning `octaves`
    /// doublings from `t_min`.
    pub fn dyadic(
        n: usize,
        period: f64,
        points_per_axis: usize,
        t_min: f64,
        octaves: usize,
        per_octave: usize,
    ) -> Result<Self, GridError> {
        let t_max = t_min * 2f64.powi(octaves as i32);
        Self::new(n, period, points_per_axis, t_min, t_max, octaves * per_octave + 1)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let bad = |m: String| Err(GridError::Invalid(m));
        if self.n != 1 && self.n != 2 {
            return bad(format!("dimension {} not in {{1, 2}}", self.n));
        }
        if !self.points_per_axis.is_power_of_two() || self.points_per_axis < 2 {
            return bad(format!("points_per_axis {} is not a power of two", self.points_per_axis));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return bad(format!("period {} must be positive", self.period));
        }
        if !(self.t_min > 0.0 && self.t_min < self.t_max && self.t_max.is_finite()) {
            return bad(format!("need 0 < t_min < t_max, got {} and {}", self.t_min, self.t_max));
        }
        if self.time_levels < 8 {
            return bad(format!("time_levels {} < 8", self.time_levels));
        }
        let h = self.h();
        if h * h > self.t_min * (1.0 + REL_SLACK) {
            return bad(format!("h^2 = {} exceeds t_min = {}", h * h, self.t_min));
        }
        if self.period < 16.0 * self.t_max.sqrt() * (1.0 - REL_SLACK) {
            return bad(format!(
                "period {} below 16 sqrt(t_max) = {}",
                self.period,
                16.0 * self.t_max.sqrt()
            ));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        self.period / self.points_per_axis as f64
    }

    pub fn cells(&self) -> usize {
        self.points_per_axis.pow(self.n as u32)
    }

    /// `h^n`, the measure of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.n as i32)
    }

    pub fn rho(&self) -> f64 {
        (self.t_max / self.t_min).powf(1.0 / (self.time_levels - 1) as f64)
    }

    pub fn times(&self) -> Vec<f64> {
        let lr = (self.t_max / self.t_min).ln() / (self.time_levels - 1) as f64;
        (0..self.time_levels)
            .map(|k| {
                if k + 1 == self.time_levels {
                    self.t_max
                } else {
                    self.t_min * (lr * k as f64).exp()
                }
            })
            .collect()
    }

    /// Trapezoid weights against `dt` on the ladder (slab widths split between
    /// the two end levels of each slab).
    pub fn dt_weights(&self) -> Vec<f64> {
        trapezoid_weights(&self.times())
    }

    /// Trapezoid weights against `dt/t`: `log rho` per slab.
    pub fn log_weights(&self) -> Vec<f64> {
        let ts = self.times();
        let logs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
        trapezoid_weights(&logs)
    }

    /// Index of the ladder level closest to `t` in log scale.
    pub fn nearest_level(&self, t: f64) -> usize {
        let k = ((t / self.t_min).ln() / self.rho().ln()).round();
        k.clamp(0.0, (self.time_levels - 1) as f64) as usize
    }

    /// Doubles the resolution in space and the number of levels per unit of `log t`.
    pub fn refined(&self) -> Result<Self, GridError> {
        Self::new(
            self.n,
            self.period,
            self.points_per_axis * 2,
            self.t_min,
            self.t_max,
            2 * (self.time_levels - 1) + 1,
        )
    }

    /// Multi-index of a flat cell index (axis 0 fastest).
    pub fn coords(&self, cell: usize) -> [usize; 2] {
        let m = self.points_per_axis;
        if self.n == 1 {
            [cell, 0]
        } else {
            [cell % m, cell / m]
        }
    }

    pub fn index(&self, c: [usize; 2]) -> usize {
        if self.n == 1 {
            c[0]
        } else {
            c[0] + self.points_per_axis * c[1]
        }
    }

    /// Position of a cell center, `x_i = i h`.
    pub fn position(&self, cell: usize) -> [f64; 2] {
        let c = self.coords(cell);
        let h = self.h();
        [c[0] as f64 * h, c[1] as f64 * h]
    }

    /// Neighbor of `cell` shifted by `step` cells along `axis`, periodically.
    pub fn shift(&self, cell: usize, axis: usize, step: isize) -> usize {
        let m = self.points_per_axis as isize;
        let mut c = self.coords(cell);
        c[axis] = (c[axis] as isize + step).rem_euclid(m) as usize;
        self.index(c)
    }

    /// Minimal-image offset of `a - b` along one axis, in `[-N/2, N/2)`.
    pub fn wrap_offset(&self, d: isize) -> isize {
        let m = self.points_per_axis as isize;
        let r = d.rem_euclid(m);
        if r >= m / 2 {
            r - m
        } else {
            r
        }
    }

    /// Torus distance between two cell centers.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let ca = self.coords(a);
        let cb = self.coords(b);
        let mut s = 0.0;
        for ax in 0..self.n {
            let d = self.wrap_offset(ca[ax] as isize - cb[ax] as isize) as f64 * self.h();
            s += d * d;
        }
        s.sqrt()
    }

    /// Torus displacement `x - center` for a point given in physical coordinates.
    pub fn displacement(&self, x: f64, center: f64) -> f64 {
        let p = self.period;
        let d = (x - center).rem_euclid(p);
        if d >= p / 2.0 {
            d - p
        } else {
            d
        }
    }

    pub fn same_space(&self, other: &GridSpec) -> bool {
        self.n == other.n
            && self.points_per_axis == other.points_per_axis
            && self.period == other.period
    }

    /// Discrete ball of radius `radius` around the origin: per row of axis 1,
    /// the contiguous range of axis-0 offsets.
    pub fn ball(&self, radius: f64) -> Result<BallStencil, GridError> {
        BallStencil::new(self, radius)
    }
}

/// Trapezoid weights for a nonuniform node sequence.
pub fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let m = nodes.len();
    if m == 1 {
        return vec![1.0];
    }
    let mut w = vec![0.0; m];
    for k in 0..m - 1 {
        let d = nodes[k + 1] - nodes[k];
        w[k] += 0.5 * d;
        w[k + 1] += 0.5 * d;
    }
    w
}

/// Cells whose centers lie at torus distance strictly below the radius.
#[derive(Debug, Clone)]
pub struct BallStencil {
    n: usize,
    m: usize,
    /// `(d1, lo, hi)`: offsets `(d0, d1)` with `lo <= d0 <= hi`.
    rows: Vec<(isize, isize, isize)>,
    count: usize,
}

impl BallStencil {
    fn new(grid: &GridSpec, radius: f64) -> Result<Self, GridError> {
        let h = grid.h();
        if !(radius >= 0.5 * h) {
            return Err(GridError::RadiusTooSmall {
                radius,
                half_h: 0.5 * h,
            });
        }
        let m = grid.points_per_axis as isize;
        let rr = (radius / h) * (radius / h);
        let lo_w = -m / 2;
        let hi_w = m / 2 - 1;
        let row_range = |d1: isize| -> Option<(isize, isize)> {
            let rem = rr - (d1 * d1) as f64;
            if rem <= 0.0 {
                return None;
            }
            // largest k with k^2 < rem
            let mut k = rem.sqrt().floor() as isize;
            while (k * k) as f64 >= rem {
                k -= 1;
            }
            while (((k + 1) * (k + 1)) as f64) < rem {
                k += 1;
            }
            Some(((-k).max(lo_w), k.min(hi_w)))
        };
        let mut rows = Vec::new();
        if grid.n == 1 {
            if let Some((lo, hi)) = row_range(0) {
                rows.push((0, lo, hi));
            }
        } else {
            for d1 in lo_w..=hi_w {
                if let Some((lo, hi)) = row_range(d1) {
                    rows.push((d1, lo, hi));
                }
            }
        }
        let count = rows.iter().map(|&(_, lo, hi)| (hi - lo + 1) as usize).sum();
        Ok(Self {
            n: grid.n,
            m: grid.points_per_axis,
            rows,
            count,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Visits every cell of the ball centered at `center`.
    pub fn for_each(&self, center: usize, mut f: impl FnMut(usize)) {
        let m = self.m as isize;
        let (c0, c1) = if self.n == 1 {
            (center as isize, 0)
        } else {
            ((center % self.m) as isize, (center / self.m) as isize)
        };
        for &(d1, lo, hi) in &self.rows {
            let row = if self.n == 1 { 0 } else { (c1 + d1).rem_euclid(m) };
            for d0 in lo..=hi {
                let col = (c0 + d0).rem_euclid(m);
                f((col + m * row) as usize);
            }
        }
    }

    /// Mean of a nonnegative real array over the ball around every cell.
    ///
    /// Sums are taken directly in a fixed order so that the result does not
    /// depend on scheduling and does not suffer prefix-sum cancellation.
    pub fn average_all(&self, values: &[f64]) -> Vec<f64> {
        let m = self.m;
        let cells = values.len();
        let inv = 1.0 / self.count as f64;
        let mut out = vec![0.0; cells];
        if self.n == 1 {
            let (_, lo, hi) = self.rows[0];
            for (c, o) in out.iter_mut().enumerate() {
                let mut s = 0.0;
                for d in lo..=hi {
                    s += values[(c as isize + d).rem_euclid(m as isize) as usize];
                }
                *o = s * inv;
            }
        } else {
            // row sums over the horizontal extent, then over rows
            let mut by_width: Vec<(isize, isize, Vec<f64>)> = Vec::new();
            for &(_, lo, hi) in &self.rows {
                if by_width.iter().any(|(a, b, _)| *a == lo && *b == hi) {
                    continue;
                }
                let mut rs = vec![0.0; cells];
                for r in 0..m {
                    for c0 in 0..m {
                        let mut s = 0.0;
                        for d in lo..=hi {
                            s += values[r * m + (c0 as isize + d).rem_euclid(m as isize) as usize];
                        }
                        rs[r * m + c0] = s;
                    }
                }
                by_width.push((lo, hi, rs));
            }
            for (c, o) in out.iter_mut().enumerate() {
                let (c0, c1) = (c % m, c / m);
                let mut s = 0.0;
                for &(d1, lo, hi) in &self.rows {
                    let rs = &by_width.iter().find(|(a, b, _)| *a == lo && *b == hi).unwrap().2;
                    let row = (c1 as isize + d1).rem_euclid(m as isize) as usize;
                    s += rs[row * m + c0];
                }
                *o = s * inv;
            }
        }
        out
    }
}

/// Complex samples on the grid, `comps` components per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    pub grid: GridSpec,
    pub comps: usize,
    pub data: Vec<C64>,
}

impl SpatialField {
    pub fn zeros(grid: GridSpec, comps: usize) -> Self {
        Self {
            grid,
            comps,
            data: vec![C64::new(0.0, 0.0); grid.cells() * comps],
        }
    }

    pub fn constant(grid: GridSpec, value: C64) -> Self {
        Self {
            grid,
            comps: 1,
            data: vec![value; grid.cells()],
        }
    }

    pub fn from_fn(grid: GridSpec, comps: usize, f: impl Fn([f64; 2], usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(grid.cells() * comps);
        for c in 0..grid.cells() {
            let x = grid.position(c);
            for a in 0..comps {
                data.push(f(x, a));
            }
        }
        Self { grid, comps, data }
    }

    pub fn from_data(grid: GridSpec, comps: usize, data: Vec<C64>) -> Result<Self, GridError> {
        if data.len() != grid.cells() * comps {
            return Err(GridError::Mismatch(format!(
                "expected {} entries, got {}",
                grid.cells() * comps,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(GridError::NonFinite);
        }
        Ok(Self { grid, comps, data })
    }

    pub fn at(&self, cell: usize, comp: usize) -> C64 {
        self.data[cell * self.comps + comp]
    }

    /// Overwrites the components from scalar fields, one per component.
    pub fn with_components(mut self, parts: &[SpatialField]) -> Self {
        for (a, part) in parts.iter().enumerate().take(self.comps) {
            for c in 0..self.grid.cells() {
                self.data[c * self.comps + a] = part.data[c * part.comps];
            }
        }
        self
    }

    /// One component as a scalar field.
    pub fn component(&self, a: usize) -> SpatialField {
        SpatialField {
            grid: self.grid,
            comps: 1,
            data: self.data.iter().skip(a).step_by(self.comps).copied().collect(),
        }
    }

    /// `|f|^2` summed over components, per cell.
    pub fn abs_sq(&self) -> Vec<f64> {
        self.data
            .chunks(self.comps)
            .map(|c| c.iter().map(|z| z.norm_sqr()).sum())
            .collect()
    }

    pub fn mean(&self) -> C64 {
        let s: C64 = self.data.iter().sum();
        s / self.data.len() as f64
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * self.abs_sq().iter().sum::<f64>()).sqrt()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        let v = self.grid.cell_volume();
        if p.is_infinite() {
            return self.abs_sq().iter().fold(0.0f64, |a, &b| a.max(b.sqrt()));
        }
        let s: f64 = self.abs_sq().iter().map(|a| a.sqrt().powf(p)).sum();
        (v * s).powf(1.0 / p)
    }

    pub fn scaled(&self, a: C64) -> Self {
        let mut o = self.clone();
        o.data.iter_mut().for_each(|z| *z *= a);
        o
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut o = self.clone();
        o.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        o
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut o = self.clone();
        o.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a -= b);
        o
    }

    /// Cyclic shift by whole cells.
    pub fn shifted(&self, by: [isize; 2]) -> Self {
        let mut o = self.clone();
        for c in 0..self.grid.cells() {
            let mut t = self.grid.shift(c, 0, by[0]);
            if self.grid.n == 2 {
                t = self.grid.shift(t, 1, by[1]);
            }
            for a in 0..self.comps {
                o.data[t * self.comps + a] = self.data[c * self.comps + a];
            }
        }
        o
    }

    pub fn save_tkf1<W: Write>(&self, w: W) -> Result<(), GridError> {
        let hdr = Tkf1Header {
            n: self.grid.n as u32,
            points_per_axis: self.grid.points_per_axis as u32,
            time_levels: 1,
            comps: self.comps as u32,
        };
        write_tkf1(w, &hdr, &self.data)
    }

    pub fn load_tkf1<R: Read>(grid: GridSpec, r: R) -> Result<Self, GridError> {
        let (hdr, data) = read_tkf1(r)?;
        hdr.check(&grid, 1)?;
        Self::from_data(grid, hdr.comps as usize, data)
    }

    /// CSV rows `cell,x0,x1,comp,re,im`.
    pub fn to_csv<W: Write>(&self, w: W) -> Result<(), GridError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["cell", "x0", "x1", "comp", "re", "im"])?;
        for c in 0..self.grid.cells() {
            let x = self.grid.position(c);
            for a in 0..self.comps {
                let z = self.at(c, a);
                wr.write_record([
                    c.to_string(),
                    x[0].to_string(),
                    x[1].to_string(),
                    a.to_string(),
                    z.re.to_string(),
                    z.im.to_string(),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Complex samples on ladder levels times cells times components.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    pub grid: GridSpec,
    pub comps: usize,
    pub data: Vec<C64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: GridSpec, comps: usize) -> Self {
        Self {
            grid,
            comps,
            data: vec![C64::new(0.0, 0.0); grid.time_levels * grid.cells() * comps],
        }
    }

    pub fn from_fn(grid: GridSpec, comps: usize, f: impl Fn(f64, [f64; 2], usize) -> C64) -> Self {
        let ts = grid.times();
        let mut data = Vec::with_capacity(grid.time_levels * grid.cells() * comps);
        for &t in &ts {
            for c in 0..grid.cells() {
                let x = grid.position(c);
                for a in 0..comps {
                    data.push(f(t, x, a));
                }
            }
        }
        Self { grid, comps, data }
    }

    pub fn from_levels(grid: GridSpec, levels: &[SpatialField]) -> Result<Self, GridError> {
        if levels.len() != grid.time_levels {
            return Err(GridError::Mismatch(format!(
                "{} levels for a ladder of {}",
                levels.len(),
                grid.time_levels
            )));
        }
        let comps = levels[0].comps;
        let mut data = Vec::with_capacity(grid.time_levels * grid.cells() * comps);
        for l in levels {
            if l.comps != comps || !l.grid.same_space(&grid) {
                return Err(GridError::Mismatch("level shape differs".into()));
            }
            data.extend_from_slice(&l.data);
        }
        Ok(Self { grid, comps, data })
    }

    pub fn level_len(&self) -> usize {
        self.grid.cells() * self.comps
    }

    pub fn level(&self, k: usize) -> &[C64] {
        let m = self.level_len();
        &self.data[k * m..(k + 1) * m]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut [C64] {
        let m = self.level_len();
        &mut self.data[k * m..(k + 1) * m]
    }

    pub fn level_field(&self, k: usize) -> SpatialField {
        SpatialField {
            grid: self.grid,
            comps: self.comps,
            data: self.level(k).to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `|F(t_k, x)|^2` summed over components, for one level.
    pub fn level_abs_sq(&self, k: usize) -> Vec<f64> {
        self.level(k)
            .chunks(self.comps)
            .map(|c| c.iter().map(|z| z.norm_sqr()).sum())
            .collect()
    }

    pub fn scaled(&self, a: C64) -> Self {
        let mut o = self.clone();
        o.data.iter_mut().for_each(|z| *z *= a);
        o
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut o = self.clone();
        o.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        o
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut o = self.clone();
        o.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a -= b);
        o
    }

    /// `(sum_k w_k h^n sum_x |F|^2)^{1/2}` with the `dt` trapezoid weights.
    pub fn l2_dt_norm(&self) -> f64 {
        let w = self.grid.dt_weights();
        let v = self.grid.cell_volume();
        let mut s = 0.0;
        for (k, wk) in w.iter().enumerate() {
            s += wk * v * self.level_abs_sq(k).iter().sum::<f64>();
        }
        s.sqrt()
    }

    pub fn save_tkf1<W: Write>(&self, w: W) -> Result<(), GridError> {
        let hdr = Tkf1Header {
            n: self.grid.n as u32,
            points_per_axis: self.grid.points_per_axis as u32,
            time_levels: self.grid.time_levels as u32,
            comps: self.comps as u32,
        };
        write_tkf1(w, &hdr, &self.data)
    }

    pub fn load_tkf1<R: Read>(grid: GridSpec, r: R) -> Result<Self, GridError> {
        let (hdr, data) = read_tkf1(r)?;
        hdr.check(&grid, grid.time_levels)?;
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(GridError::NonFinite);
        }
        Ok(Self {
            grid,
            comps: hdr.comps as usize,
            data,
        })
    }

    /// CSV rows `level,t,cell,x0,x1,comp,re,im`; refuses fields above 10^6 entries.
    pub fn to_csv<W: Write>(&self, w: W) -> Result<(), GridError> {
        if self.data.len() > 1_000_000 {
            return Err(GridError::Format("field too large for CSV export".into()));
        }
        let ts = self.grid.times();
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["level", "t", "cell", "x0", "x1", "comp", "re", "im"])?;
        for (k, t) in ts.iter().enumerate() {
            for c in 0..self.grid.cells() {
                let x = self.grid.position(c);
                for a in 0..self.comps {
                    let z = self.level(k)[c * self.comps + a];
                    wr.write_record([
                        k.to_string(),
                        t.to_string(),
                        c.to_string(),
                        x[0].to_string(),
                        x[1].to_string(),
                        a.to_string(),
                        z.re.to_string(),
                        z.im.to_string(),
                    ])?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tkf1Header {
    pub n: u32,
    pub points_per_axis: u32,
    pub time_levels: u32,
    pub comps: u32,
}

impl Tkf1Header {
    fn check(&self, grid: &GridSpec, levels: usize) -> Result<(), GridError> {
        if self.n as usize != grid.n
            || self.points_per_axis as usize != grid.points_per_axis
            || self.time_levels as usize != levels
        {
            return Err(GridError::Mismatch(format!(
                "file header {:?} does not match grid (n = {}, N = {}, levels = {levels})",
                self, grid.n, grid.points_per_axis
            )));
        }
        Ok(())
    }
}

pub const TKF1_MAGIC: &[u8; 4] = b"TKF1";

pub fn write_tkf1<W: Write>(mut w: W, hdr: &Tkf1Header, data: &[C64]) -> Result<(), GridError> {
    w.write_all(TKF1_MAGIC)?;
    for v in [hdr.n, hdr.points_per_axis, hdr.time_levels, hdr.comps] {
        w.write_all(&v.to_le_bytes())?;
    }
    for z in data {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tkf1<R: Read>(mut r: R) -> Result<(Tkf1Header, Vec<C64>), GridError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TKF1_MAGIC {
        return Err(GridError::Format("bad magic".into()));
    }
    let mut u = [0u32; 4];
    for v in u.iter_mut() {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        *v = u32::from_le_bytes(b);
    }
    let hdr = Tkf1Header {
        n: u[0],
        points_per_axis: u[1],
        time_levels: u[2],
        comps: u[3],
    };
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % 16 != 0 {
        return Err(GridError::Format("payload is not a whole number of complex pairs".into()));
    }
    let data = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect();
    Ok((hdr, data))
}

/// Mean of a field over the ball `B(center, radius)`, component by component.
pub fn ball_average(
    field: &SpatialField,
    center: usize,
    radius: f64,
) -> Result<Vec<C64>, GridError> {
    let st = field.grid.ball(radius)?;
    let mut acc = vec![C64::new(0.0, 0.0); field.comps];
    st.for_each(center, |c| {
        for (a, z) in acc.iter_mut().enumerate() {
            *z += field.at(c, a);
        }
    });
    let k = st.count() as f64;
    Ok(acc.into_iter().map(|z| z / k).collect())
}

/// Parabolic Whitney cube `(t, 2t) x B(x, sqrt t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhitneyCube {
    pub t: f64,
    pub center: usize,
}

impl WhitneyCube {
    pub fn radius(&self) -> f64 {
        self.t.sqrt()
    }

    /// Ladder levels inside `[t, 2t]`.
    pub fn levels(&self, grid: &GridSpec) -> Vec<usize> {
        let ts = grid.times();
        let lo = self.t * (1.0 - 1e-12);
        let hi = 2.0 * self.t * (1.0 + 1e-12);
        (0..ts.len()).filter(|&k| ts[k] >= lo && ts[k] <= hi).collect()
    }
}

/// Mean of `|F|^2` over a Whitney cube; the time weights are the trapezoid
/// weights of the ladder restricted to the cube.
pub fn whitney_average_sq(field: &SpaceTimeField, cube: &WhitneyCube) -> Result<f64, GridError> {
    let ks = cube.levels(&field.grid);
    if ks.is_empty() {
        return Err(GridError::CubeOutOfRange(cube.t));
    }
    let ts = field.grid.times();
    let nodes: Vec<f64> = ks.iter().map(|&k| ts[k]).collect();
    let w = trapezoid_weights(&nodes);
    let wsum: f64 = w.iter().sum();
    let st = field.grid.ball(cube.radius())?;
    let mut total = 0.0;
    for (i, &k) in ks.iter().enumerate() {
        let a = field.level_abs_sq(k);
        let mut s = 0.0;
        st.for_each(cube.center, |c| s += a[c]);
        total += w[i] * s / st.count() as f64;
    }
    Ok(total / wsum)
}

/// Discrete `L^2` pairing `h^n sum A conj(B)`.
pub fn pair(a: &SpatialField, b: &SpatialField) -> Result<C64, GridError> {
    if !a.grid.same_space(&b.grid) || a.comps != b.comps {
        return Err(GridError::Mismatch("pairing fields on different grids".into()));
    }
    let s: C64 = a.data.iter().zip(&b.data).map(|(x, y)| x * y.conj()).sum();
    Ok(s * a.grid.cell_volume())
}

/// Forward-difference gradient of a scalar field; `n` components per cell.
pub fn grad_h(f: &SpatialField) -> SpatialField {
    let g = f.grid;
    let n = g.n;
    let h = g.h();
    let mut out = SpatialField::zeros(g, n);
    for c in 0..g.cells() {
        let u = f.data[c];
        for a in 0..n {
            out.data[c * n + a] = (f.data[g.shift(c, a, 1)] - u) / h;
        }
    }
    out
}

/// Divergence `-grad_h^*`, the exact negative adjoint of [`grad_h`] under [`pair`].
pub fn div_h(v: &SpatialField) -> SpatialField {
    let g = v.grid;
    let n = g.n;
    let h = g.h();
    let mut out = SpatialField::zeros(g, 1);
    for c in 0..g.cells() {
        let mut s = C64::new(0.0, 0.0);
        for a in 0..n {
            s += v.data[c * n + a] - v.data[g.shift(c, a, -1) * n + a];
        }
        out.data[c] = s / h;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g1() -> GridSpec {
        GridSpec::dyadic(1, 64.0, 64, 1.0, 4, 2).unwrap()
    }

    fn g2() -> GridSpec {
        GridSpec::dyadic(2, 32.0, 32, 1.0, 2, 4).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(3, 64.0, 64, 1.0, 16.0, 9).is_err());
        assert!(GridSpec::new(1, 64.0, 48, 1.0, 16.0, 9).is_err());
        assert!(GridSpec::new(1, 64.0, 16, 1.0, 16.0, 9).is_err()); // h^2 = 16 > t_min
        assert!(GridSpec::new(1, 64.0, 64, 1.0, 100.0, 9).is_err()); // torus too small
        assert!(GridSpec::new(1, 64.0, 64, 1.0, 16.0, 7).is_err());
    }

    #[test]
    fn ladder_and_weights() {
        let g = g1();
        let ts = g.times();
        assert_eq!(ts.len(), 9);
        assert!((ts[2] - 2.0).abs() < 1e-12);
        let w = g.dt_weights();
        assert!((w.iter().sum::<f64>() - (16.0 - 1.0)).abs() < 1e-12);
        let lw = g.log_weights();
        assert!((lw.iter().sum::<f64>() - 16f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn constant_ball_average() {
        let f = SpatialField::constant(g1(), C64::new(2.5, -1.0));
        let a = ball_average(&f, 7, 5.3).unwrap();
        assert!((a[0] - C64::new(2.5, -1.0)).norm() < 1e-14);
    }

    #[test]
    fn huge_ball_is_global_mean() {
        let g = g2();
        let f = SpatialField::from_fn(g, 1, |x, _| C64::new(x[0].sin() + x[1], 0.0));
        let r = g.period / 2.0 * 2f64.sqrt() + 1.0;
        let a = ball_average(&f, 3, r).unwrap()[0];
        assert!((a - f.mean()).norm() < 1e-12);
    }

    #[test]
    fn spike_average_counts_cells() {
        let g = g2();
        let mut f = SpatialField::zeros(g, 1);
        let c = g.index([10, 12]);
        f.data[c] = C64::new(1.0, 0.0);
        let r = 3.2;
        // brute-force count of centers strictly inside the ball
        let k = (0..g.cells()).filter(|&y| g.distance(c, y) < r).count();
        let a = ball_average(&f, c, r).unwrap()[0].re;
        assert!((a - 1.0 / k as f64).abs() < 1e-15);
        assert_eq!(g.ball(r).unwrap().count(), k);
    }

    #[test]
    fn strict_radius() {
        let g = g1();
        // radius exactly two cells: the cells at distance 2h are excluded
        assert_eq!(g.ball(2.0).unwrap().count(), 3);
        assert!(g.ball(0.4).is_err());
    }

    #[test]
    fn whitney_examples() {
        let g = g1();
        let z = SpaceTimeField::zeros(g, 1);
        let cube = WhitneyCube { t: 2.0, center: 10 };
        assert_eq!(whitney_average_sq(&z, &cube).unwrap(), 0.0);
        let one = SpaceTimeField::from_fn(g, 1, |_, _, _| C64::new(1.0, 0.0));
        assert!((whitney_average_sq(&one, &cube).unwrap() - 1.0).abs() < 1e-14);
        // indicator of the left half of the ball, cross-checked by direct count
        let ind = SpaceTimeField::from_fn(g, 1, |_, x, _| {
            C64::new(if x[0] <= 10.0 { 1.0 } else { 0.0 }, 0.0)
        });
        let st = g.ball(cube.radius()).unwrap();
        let mut inside = 0;
        st.for_each(10, |c| {
            if g.position(c)[0] <= 10.0 {
                inside += 1
            }
        });
        let want = inside as f64 / st.count() as f64;
        assert!((whitney_average_sq(&ind, &cube).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn pairing_examples() {
        let g = g2();
        let f = SpatialField::from_fn(g, 1, |x, _| C64::new(x[0].cos(), x[1] * 0.1));
        let ff = pair(&f, &f).unwrap();
        assert!((ff.re - f.l2_norm().powi(2)).abs() < 1e-10);
        let k = 2.0 * std::f64::consts::PI / g.period;
        let e1 = SpatialField::from_fn(g, 1, |x, _| C64::from_polar(1.0, k * x[0]));
        let e2 = SpatialField::from_fn(g, 1, |x, _| C64::from_polar(1.0, 3.0 * k * x[1]));
        assert!(pair(&e1, &e2).unwrap().norm() < 1e-10);
        let one = SpatialField::constant(g, C64::new(1.0, 0.0));
        let p1 = pair(&f, &one).unwrap();
        assert!((p1 - f.mean() * g.period * g.period).norm() < 1e-10);
    }

    #[test]
    fn divergence_is_negative_adjoint() {
        let g = g2();
        let u = SpatialField::from_fn(g, 1, |x, _| C64::new((0.3 * x[0]).sin(), x[1].cos()));
        let v = SpatialField::from_fn(g, 2, |x, a| C64::new(x[a] * 0.01, (x[0] * x[1]).sin()));
        let lhs = pair(&grad_h(&u), &v).unwrap();
        let rhs = -pair(&u, &div_h(&v)).unwrap();
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0));
    }

    #[test]
    fn tkf1_round_trip_is_bit_exact() {
        let g = g1();
        let f = SpaceTimeField::from_fn(g, 2, |t, x, a| C64::new(t * x[0] + a as f64, -t / 3.0));
        let mut buf = Vec::new();
        f.save_tkf1(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"TKF1");
        let back = SpaceTimeField::load_tkf1(g, &buf[..]).unwrap();
        assert_eq!(back, f);
        let wrong = GridSpec::dyadic(1, 64.0, 64, 1.0, 4, 3).unwrap();
        assert!(SpaceTimeField::load_tkf1(wrong, &buf[..]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn ball_average_commutes_with_shifts(s0 in -40isize..40, s1 in -40isize..40,
                                             r in 0.6f64..9.0, c in 0usize..1024) {
            let g = g2();
            let f = SpatialField::from_fn(g, 1, |x, _| C64::new((x[0] * 0.7).sin() + x[1] * x[1] * 0.01, x[0]));
            let sh = f.shifted([s0, s1]);
            let moved = g.shift(g.shift(c, 0, s0), 1, s1);
            let a = ball_average(&f, c, r).unwrap()[0];
            let b = ball_average(&sh, moved, r).unwrap()[0];
            prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1.0));
        }
    }
}
