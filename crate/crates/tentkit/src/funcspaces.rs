//! Weighted tent spaces, Z-spaces, slice spaces and tent-space atoms.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exponents::{Ext, LINE_TOL};
use crate::grid::{trapezoid_weights, GridError, GridSpec, SpaceTimeField, SpatialField};
use crate::spectral::{difference_symbol, forward, inverse, lp_of_sq, wavenumbers};
use crate::C64;

#[derive(Debug, Error)]
pub enum FuncSpaceError {
    #[error("non-finite entry in field")]
    NonFinite,
    #[error("invalid norm spec: {0}")]
    InvalidSpec(String),
    #[error("slice scale delta = {delta} needs sqrt(delta) >= h = {h}")]
    ScaleTooSmall { delta: f64, h: f64 },
    #[error("atom geometry not representable: {0}")]
    Geometry(String),
    #[error("ratio undefined: reference norm is zero")]
    Undefined,
    #[error("exponent line condition violated: {0}")]
    Line(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// `T^p_beta` with a cone aperture; for `p = inf` the Carleson variant with
/// `|B|^{-deficit}` normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TentNormSpec {
    pub beta: f64,
    pub p: Ext,
    pub aperture: f64,
    pub carleson_deficit: f64,
}

impl TentNormSpec {
    pub fn new(beta: f64, p: impl Into<Ext>) -> Self {
        Self {
            beta,
            p: p.into(),
            aperture: 1.0,
            carleson_deficit: 0.0,
        }
    }

    pub fn with_aperture(mut self, aperture: f64) -> Self {
        self.aperture = aperture;
        self
    }

    pub fn with_deficit(mut self, d: f64) -> Self {
        self.carleson_deficit = d;
        self
    }

    fn validate(&self) -> Result<(), FuncSpaceError> {
        if !(self.aperture >= 1.0) {
            return Err(FuncSpaceError::InvalidSpec(format!("aperture {} < 1", self.aperture)));
        }
        if !(self.carleson_deficit >= 0.0) {
            return Err(FuncSpaceError::InvalidSpec(format!(
                "negative Carleson deficit {}",
                self.carleson_deficit
            )));
        }
        if let Ext::Finite(p) = self.p {
            if !(p > 0.0) {
                return Err(FuncSpaceError::InvalidSpec(format!("p = {p}")));
            }
        }
        Ok(())
    }
}

fn check_finite(f: &SpaceTimeField) -> Result<(), FuncSpaceError> {
    if f.is_finite() {
        Ok(())
    } else {
        Err(FuncSpaceError::NonFinite)
    }
}

/// `t_k^{-2 beta} |F(t_k, x)|^2` per cell.
fn weighted_sq(f: &SpaceTimeField, k: usize, t: f64, beta: f64) -> Vec<f64> {
    let w = t.powf(-2.0 * beta);
    f.level_abs_sq(k).into_iter().map(|a| a * w).collect()
}

/// Inner cone integral `sum_k w_k ball_avg(t^{-2 beta}|F|^2, x, aperture sqrt t_k)` per cell.
fn cone_integrand(f: &SpaceTimeField, beta: f64, aperture: f64) -> Result<Vec<f64>, FuncSpaceError> {
    let g = f.grid;
    let ts = g.times();
    let w = g.dt_weights();
    let per_level: Vec<Vec<f64>> = (0..ts.len())
        .into_par_iter()
        .map(|k| -> Result<Vec<f64>, GridError> {
            let a = weighted_sq(f, k, ts[k], beta);
            let st = g.ball(aperture * ts[k].sqrt())?;
            Ok(st.average_all(&a).into_iter().map(|v| v * w[k]).collect())
        })
        .collect::<Result<_, _>>()?;
    let mut inner = vec![0.0; g.cells()];
    for lvl in &per_level {
        for (acc, v) in inner.iter_mut().zip(lvl) {
            *acc += v;
        }
    }
    Ok(inner)
}

/// `( sum_x h^n ( int int_cone |t^{-beta} F|^2 )^{p/2} )^{1/p}`; `p = inf` goes to [`carleson_norm`].
pub fn tent_norm(f: &SpaceTimeField, spec: &TentNormSpec) -> Result<f64, FuncSpaceError> {
    spec.validate()?;
    check_finite(f)?;
    if spec.p.is_inf() {
        return Ok(carleson_norm(f, spec)?.value);
    }
    let inner = cone_integrand(f, spec.beta, spec.aperture)?;
    Ok(lp_of_sq(&f.grid, &inner, spec.p))
}

/// `( sum_k w_k h^n sum_x t_k^{-2 beta} |F|^2 )^{1/2}`, the `L^2_beta` size of a field.
pub fn l2_beta(f: &SpaceTimeField, beta: f64) -> f64 {
    let g = f.grid;
    let ts = g.times();
    let w = g.dt_weights();
    let v = g.cell_volume();
    let mut s = 0.0;
    for k in 0..ts.len() {
        s += w[k] * v * weighted_sq(f, k, ts[k], beta).iter().sum::<f64>();
    }
    s.sqrt()
}

/// Sup over the dyadic ball family and its maximizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CarlesonValue {
    pub value: f64,
    pub center: usize,
    pub radius: f64,
}

/// Radii `h 2^k` from one cell up to the first ball that covers the torus.
pub fn dyadic_radii(grid: &GridSpec) -> Vec<f64> {
    let cover = 0.5 * grid.period * (grid.n as f64).sqrt() + grid.h();
    let mut out = Vec::new();
    let mut r = grid.h();
    loop {
        out.push(r);
        if r >= cover {
            break;
        }
        r *= 2.0;
    }
    out
}

/// Trapezoid weights of the ladder truncated at `horizon`, with the last node
/// interpolated linearly; returns `(level, weight)` pairs.
fn truncated_weights(ts: &[f64], horizon: f64) -> Vec<(usize, f64)> {
    let mut nodes: Vec<f64> = ts.iter().copied().take_while(|&t| t <= horizon).collect();
    let kept = nodes.len();
    if kept == 0 {
        return Vec::new();
    }
    let mut pairs: Vec<(usize, f64)>;
    if kept < ts.len() && horizon > nodes[kept - 1] {
        nodes.push(horizon);
        let w = trapezoid_weights(&nodes);
        pairs = (0..kept).map(|k| (k, w[k])).collect();
        // value at the horizon interpolated between levels kept-1 and kept
        let lam = (horizon - ts[kept - 1]) / (ts[kept] - ts[kept - 1]);
        pairs[kept - 1].1 += w[kept] * (1.0 - lam);
        pairs.push((kept, w[kept] * lam));
    } else if kept == 1 {
        pairs = vec![(0, 0.0)];
    } else {
        let w = trapezoid_weights(&nodes);
        pairs = (0..kept).map(|k| (k, w[k])).collect();
    }
    pairs
}

/// `sup_B |B|^{-deficit} ( int_0^{r(B)^2} fint_B |t^{-beta} F|^2 dt )^{1/2}` over
/// the family of all cells as centers and radii [`dyadic_radii`].
pub fn carleson_norm(f: &SpaceTimeField, spec: &TentNormSpec) -> Result<CarlesonValue, FuncSpaceError> {
    spec.validate()?;
    check_finite(f)?;
    let g = f.grid;
    let ts = g.times();
    let weighted: Vec<Vec<f64>> = (0..ts.len()).map(|k| weighted_sq(f, k, ts[k], spec.beta)).collect();
    let radii = dyadic_radii(&g);
    let per_radius: Vec<CarlesonValue> = radii
        .par_iter()
        .map(|&r| -> Result<CarlesonValue, GridError> {
            let mut acc = vec![0.0; g.cells()];
            for (k, w) in truncated_weights(&ts, r * r) {
                for (a, v) in acc.iter_mut().zip(&weighted[k]) {
                    *a += w * v;
                }
            }
            let st = g.ball(r)?;
            let avg = st.average_all(&acc);
            let measure = st.count() as f64 * g.cell_volume();
            let norm = measure.powf(-spec.carleson_deficit);
            let (center, best) = avg
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bc, bv), (c, &v)| if v > bv { (c, v) } else { (bc, bv) });
            Ok(CarlesonValue {
                value: norm * best.max(0.0).sqrt(),
                center,
                radius: r,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(per_radius
        .into_iter()
        .fold(CarlesonValue { value: 0.0, center: 0, radius: radii[0] }, |best, v| {
            if v.value > best.value {
                v
            } else {
                best
            }
        }))
}

/// `Z^p_beta`: `int_{t/2}^t fint_{B(x, aperture sqrt t)} |s^{-beta} F|^2 ds dy`, square-rooted,
/// then `L^p` against `dt dx / t`; sup over `(t, x)` at `p = inf`. Below `2 t_min` the
/// window is cut at `t_min`.
pub fn z_norm(f: &SpaceTimeField, spec: &TentNormSpec) -> Result<f64, FuncSpaceError> {
    spec.validate()?;
    check_finite(f)?;
    let g = f.grid;
    let ts = g.times();
    let lw = g.log_weights();
    let weighted: Vec<Vec<f64>> = (0..ts.len()).map(|k| weighted_sq(f, k, ts[k], spec.beta)).collect();
    let averages: Vec<Vec<f64>> = (0..ts.len())
        .into_par_iter()
        .map(|k| -> Result<Vec<f64>, GridError> {
            let lo = 0.5 * ts[k] * (1.0 - 1e-12);
            let ks: Vec<usize> = (0..=k).filter(|&i| ts[i] >= lo).collect();
            let nodes: Vec<f64> = ks.iter().map(|&i| ts[i]).collect();
            // a lone node is a window of length zero
            let w = if nodes.len() > 1 { trapezoid_weights(&nodes) } else { vec![0.0] };
            let mut acc = vec![0.0; g.cells()];
            for (i, &lvl) in ks.iter().enumerate() {
                for (a, v) in acc.iter_mut().zip(&weighted[lvl]) {
                    *a += w[i] * v;
                }
            }
            Ok(g.ball(spec.aperture * ts[k].sqrt())?.average_all(&acc))
        })
        .collect::<Result<_, _>>()?;
    match spec.p {
        Ext::Inf => Ok(averages
            .iter()
            .flat_map(|a| a.iter())
            .fold(0.0f64, |m, &v| m.max(v.sqrt()))),
        Ext::Finite(p) => {
            let v = g.cell_volume();
            let mut s = 0.0;
            for (k, a) in averages.iter().enumerate() {
                s += lw[k] * v * a.iter().map(|x| x.powf(0.5 * p)).sum::<f64>();
            }
            Ok(s.powf(1.0 / p))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceOrder {
    Plain,
    Grad,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SliceValue {
    pub value: f64,
    /// Set when only an upper bound of the infimum norm is available.
    pub upper_bound: bool,
}

/// Solves `div_h G = f - mean(f)` with `G^ = -D f^ / |D|^2`, `D` the forward-difference symbol.
pub fn divergence_preimage(f: &SpatialField) -> SpatialField {
    let g = f.grid;
    let xs = wavenumbers(&g);
    let spec = forward(f);
    let mut out = vec![vec![C64::new(0.0, 0.0); g.cells()]; g.n];
    for (c, xi) in xs.iter().enumerate() {
        let d = difference_symbol(&g, *xi);
        let dd: f64 = (0..g.n).map(|a| d[a].norm_sqr()).sum();
        if dd == 0.0 {
            continue;
        }
        for a in 0..g.n {
            out[a][c] = -d[a] * spec[0][c] / dd;
        }
    }
    inverse(g, out)
}

/// `E^p_delta` (plain), `E^{1,p}_delta` (grad) and an upper bound for `E^{-1,p}_delta` (div).
pub fn slice_norm(f: &SpatialField, p: Ext, delta: f64, order: SliceOrder) -> Result<SliceValue, FuncSpaceError> {
    let g = f.grid;
    let r = delta.sqrt();
    if !(r >= g.h()) {
        return Err(FuncSpaceError::ScaleTooSmall { delta, h: g.h() });
    }
    if let Ext::Finite(q) = p {
        if q < 1.0 {
            return Err(FuncSpaceError::InvalidSpec(format!("slice exponent {q} < 1")));
        }
    }
    let (field, upper_bound) = match order {
        SliceOrder::Plain => (f.clone(), false),
        SliceOrder::Grad => (crate::grid::grad_h(f), false),
        SliceOrder::Div => (divergence_preimage(f), true),
    };
    let avg = g.ball(r)?.average_all(&field.abs_sq());
    Ok(SliceValue {
        value: lp_of_sq(&g, &avg, p),
        upper_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomShape {
    Flat,
    Random,
}

/// A field supported in the Carleson box `[0, r^2] x B` with `||a||_{L^2_beta} = |B|^{-(1/p - 1/2)}`.
#[derive(Debug, Clone)]
pub struct TentAtom {
    pub field: SpaceTimeField,
    pub ball_center: usize,
    pub ball_radius: f64,
    pub beta: f64,
    pub p: Ext,
}

impl TentAtom {
    /// `|B|`, the measure of the discrete ball.
    pub fn ball_measure(&self) -> Result<f64, FuncSpaceError> {
        let g = self.field.grid;
        Ok(g.ball(self.ball_radius)?.count() as f64 * g.cell_volume())
    }

    pub fn target_size(&self) -> Result<f64, FuncSpaceError> {
        Ok(self.ball_measure()?.powf(-(self.p.recip() - 0.5)))
    }

    /// Whether every nonzero value lies in the box.
    pub fn support_ok(&self) -> bool {
        let g = self.field.grid;
        let ts = g.times();
        let mut inside = vec![false; g.cells()];
        if let Ok(st) = g.ball(self.ball_radius) {
            st.for_each(self.ball_center, |c| inside[c] = true);
        }
        let r2 = self.ball_radius * self.ball_radius * (1.0 + 1e-12);
        (0..ts.len()).all(|k| {
            self.field
                .level(k)
                .chunks(self.field.comps)
                .enumerate()
                .all(|(c, z)| (ts[k] <= r2 && inside[c]) || z.iter().all(|v| *v == C64::new(0.0, 0.0)))
        })
    }
}

pub fn make_atom(
    grid: GridSpec,
    ball_center: usize,
    ball_radius: f64,
    beta: f64,
    p: Ext,
    shape: AtomShape,
    rng: &mut impl Rng,
) -> Result<TentAtom, FuncSpaceError> {
    if ball_radius * ball_radius < grid.t_min {
        return Err(FuncSpaceError::Geometry(format!(
            "r(B)^2 = {} below t_min = {}",
            ball_radius * ball_radius,
            grid.t_min
        )));
    }
    if ball_radius > 0.5 * grid.period {
        return Err(FuncSpaceError::Geometry(format!("radius {ball_radius} exceeds half the torus")));
    }
    let st = grid.ball(ball_radius)?;
    let ts = grid.times();
    let r2 = ball_radius * ball_radius * (1.0 + 1e-12);
    let mut field = SpaceTimeField::zeros(grid, 1);
    for k in 0..ts.len() {
        if ts[k] > r2 {
            break;
        }
        let lvl = field.level_mut(k);
        st.for_each(ball_center, |c| {
            lvl[c] = match shape {
                AtomShape::Flat => C64::new(1.0, 0.0),
                AtomShape::Random => C64::new(rng.random_range(0.25..1.75), rng.random_range(-0.5..0.5)),
            };
        });
    }
    let mut atom = TentAtom {
        field,
        ball_center,
        ball_radius,
        beta,
        p,
    };
    let size = l2_beta(&atom.field, beta);
    if size == 0.0 {
        return Err(FuncSpaceError::Geometry("empty support".into()));
    }
    let scale = atom.target_size()? / size;
    atom.field = atom.field.scaled(C64::new(scale, 0.0));
    Ok(atom)
}

/// `||F||` at `aperture2` over `||F||` at `spec.aperture`.
pub fn aperture_ratio(f: &SpaceTimeField, spec: &TentNormSpec, aperture2: f64) -> Result<f64, FuncSpaceError> {
    let base = tent_norm(f, spec)?;
    if base == 0.0 {
        return Err(FuncSpaceError::Undefined);
    }
    Ok(tent_norm(f, &spec.with_aperture(aperture2))? / base)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Tent,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEnd {
    pub kind: NormKind,
    pub spec: TentNormSpec,
}

impl NormEnd {
    pub fn tent(spec: TentNormSpec) -> Self {
        Self { kind: NormKind::Tent, spec }
    }

    pub fn z(spec: TentNormSpec) -> Self {
        Self { kind: NormKind::Z, spec }
    }

    pub fn eval(&self, f: &SpaceTimeField) -> Result<f64, FuncSpaceError> {
        match self.kind {
            NormKind::Tent => tent_norm(f, &self.spec),
            NormKind::Z => z_norm(f, &self.spec),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmbeddingRecord {
    pub from_norm: f64,
    pub to_norm: f64,
    pub ratio: f64,
    pub budget: f64,
    pub pass: bool,
}

/// Checks `beta0 > beta1`, `p0 < p1` and `2 beta0 - n/p0 = 2 beta1 - n/p1`; identical ends pass trivially.
pub fn validate_line(n: usize, from: &TentNormSpec, to: &TentNormSpec) -> Result<(), FuncSpaceError> {
    if from.beta == to.beta && from.p == to.p {
        return Ok(());
    }
    let nn = n as f64;
    let gap = (2.0 * from.beta - nn * from.p.recip()) - (2.0 * to.beta - nn * to.p.recip());
    if !(from.beta > to.beta) || !from.p.lt(to.p) || gap.abs() > LINE_TOL {
        return Err(FuncSpaceError::Line(format!(
            "({}, {}) -> ({}, {}): need beta0 > beta1, p0 < p1 and equal 2 beta - n/p (gap {gap:e})",
            from.beta, from.p, to.beta, to.p
        )));
    }
    Ok(())
}

pub fn embedding_check(
    f: &SpaceTimeField,
    from: &NormEnd,
    to: &NormEnd,
    budget: f64,
) -> Result<EmbeddingRecord, FuncSpaceError> {
    validate_line(f.grid.n, &from.spec, &to.spec)?;
    let a = from.eval(f)?;
    let b = to.eval(f)?;
    if a == 0.0 {
        return Err(FuncSpaceError::Undefined);
    }
    let ratio = b / a;
    Ok(EmbeddingRecord {
        from_norm: a,
        to_norm: b,
        ratio,
        budget,
        pass: ratio <= budget,
    })
}

/// One exported norm evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct NormRow {
    pub kind: String,
    pub beta: f64,
    pub p: String,
    pub aperture: f64,
    pub carleson_deficit: f64,
    pub value: f64,
    pub time_levels: usize,
    pub points_per_axis: usize,
}

impl NormRow {
    pub fn new(kind: NormKind, spec: &TentNormSpec, grid: &GridSpec, value: f64) -> Self {
        Self {
            kind: format!("{kind:?}").to_lowercase(),
            beta: spec.beta,
            p: spec.p.to_string(),
            aperture: spec.aperture,
            carleson_deficit: spec.carleson_deficit,
            value,
            time_levels: grid.time_levels,
            points_per_axis: grid.points_per_axis,
        }
    }
}

pub fn write_norm_rows<W: std::io::Write>(rows: &[NormRow], w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{random_bumps, rng};
    use proptest::prelude::*;

    fn g1() -> GridSpec {
        GridSpec::dyadic(1, 128.0, 256, 0.25, 8, 3).unwrap()
    }

    #[test]
    fn zero_field_norms() {
        let z = SpaceTimeField::zeros(g1(), 1);
        for p in [Ext::Finite(0.5), Ext::Finite(2.0), Ext::Inf] {
            let s = TentNormSpec::new(0.2, p);
            assert_eq!(tent_norm(&z, &s).unwrap(), 0.0);
            assert_eq!(z_norm(&z, &s).unwrap(), 0.0);
        }

        assert!(matches!(aperture_ratio(&z, &TentNormSpec::new(0.0, 2.0), 2.0), Err(FuncSpaceError::Undefined)));
    }

    #[test]
    fn z_norm_of_a_pure_power() {
        let g = GridSpec::dyadic(1, 64.0, 64, 1.0, 4, 4).unwrap();
        let beta = 0.3;
        let f = SpaceTimeField::from_fn(g, 1, |t, _, _| C64::new(t.powf(beta), 0.0));
        // |s^{-beta} F|^2 = 1, so the Whitney integral is the window length
        let sup = z_norm(&f, &TentNormSpec::new(beta, Ext::Inf)).unwrap();
        assert!((sup - (g.t_max / 2.0).sqrt()).abs() < 1e-12);
        // p = 2: sum over the ladder of (t - max(t/2, t_min)) with log weights, times the period
        let lw = g.log_weights();
        let want: f64 = g
            .times()
            .iter()
            .zip(&lw)
            .map(|(t, w)| w * (t - (t / 2.0).max(g.t_min)))
            .sum::<f64>()
            * g.period;
        let two = z_norm(&f, &TentNormSpec::new(beta, 2.0)).unwrap();
        assert!((two * two - want).abs() < 1e-9 * want, "{two} {want}");
    }

    #[test]
    fn fubini_at_p2() {
        let g = g1();
        let mut r = rng(11);
        for _ in 0..5 {
            let f = random_bumps(g, 1, &mut r);
            for beta in [-0.5, 0.0, 0.7] {
                let t = tent_norm(&f, &TentNormSpec::new(beta, 2.0)).unwrap();
                let d = l2_beta(&f, beta);
                assert!((t - d).abs() <= 1e-10 * d, "{t} {d}");
            }
            let s = f.level_field(10);
            let v = slice_norm(&s, Ext::Finite(2.0), 3.0, SliceOrder::Plain).unwrap().value;
            assert!((v - s.l2_norm()).abs() <= 1e-10 * s.l2_norm());
        }
    }

    #[test]
    fn carleson_of_one() {
        let g = g1();
        let one = SpaceTimeField::from_fn(g, 1, |_, _, _| C64::new(1.0, 0.0));
        let c = carleson_norm(&one, &TentNormSpec::new(0.0, Ext::Inf)).unwrap();
        assert!((c.value - (g.t_max - g.t_min).sqrt()).abs() < 1e-12 * c.value);
    }

    #[test]
    fn carleson_matches_brute_force_on_whitney_support() {
        let g = GridSpec::dyadic(1, 64.0, 128, 0.25, 4, 3).unwrap();
        let ts = g.times();
        let t: f64 = 1.0;
        let x0 = 20;
        let st = g.ball(t.sqrt()).unwrap();
        let mut f = SpaceTimeField::zeros(g, 1);
        for k in 0..ts.len() {
            if ts[k] >= t && ts[k] <= 2.0 * t {
                let lvl = f.level_mut(k);
                st.for_each(x0, |c| lvl[c] = C64::new(1.0, 0.0));
            }
        }
        let spec = TentNormSpec::new(0.25, Ext::Inf).with_deficit(0.5);
        let got = carleson_norm(&f, &spec).unwrap();
        let mut best = 0.0f64;
        for r in dyadic_radii(&g) {
            let ball = g.ball(r).unwrap();
            let meas = ball.count() as f64 * g.cell_volume();
            for center in 0..g.cells() {
                let mut box_int = 0.0;
                for (k, w) in truncated_weights(&ts, r * r) {
                    let mut s = 0.0;
                    ball.for_each(center, |c| s += f.level(k)[c].norm_sqr() * ts[k].powf(-0.5));
                    box_int += w * s / ball.count() as f64;
                }
                best = best.max(meas.powf(-0.5) * box_int.sqrt());
            }
        }
        assert!((got.value - best).abs() < 1e-12 * best, "{} {best}", got.value);
    }

    #[test]
    fn slice_examples() {
        let g = g1();
        let c = SpatialField::constant(g, C64::new(1.5, 0.0));
        for p in [1.0, 2.0, 3.0] {
            let v = slice_norm(&c, Ext::Finite(p), 4.0, SliceOrder::Plain).unwrap().value;
            assert!((v - 1.5 * g.period.powf(1.0 / p)).abs() < 1e-12 * v);
        }
        assert_eq!(slice_norm(&SpatialField::zeros(g, 1), Ext::Inf, 4.0, SliceOrder::Div).unwrap().value, 0.0);
        assert!(slice_norm(&c, Ext::Finite(2.0), 0.01, SliceOrder::Plain).is_err());
        let d = slice_norm(&c, Ext::Finite(2.0), 4.0, SliceOrder::Div).unwrap();
        assert!(d.upper_bound);
    }

    #[test]
    fn divergence_preimage_inverts_div() {
        let g = GridSpec::dyadic(2, 32.0, 32, 1.0, 2, 4).unwrap();
        let f = crate::families::band_limited(g, 5, &mut rng(2));
        let gg = divergence_preimage(&f);
        let back = crate::grid::div_h(&gg);
        assert!(back.sub(&f).l2_norm() < 1e-10 * f.l2_norm());
    }

    #[test]
    fn flat_atom() {
        let g = g1();
        let atom = make_atom(g, 40, 3.0, 0.25, Ext::Finite(1.0), AtomShape::Flat, &mut rng(1)).unwrap();
        assert!(atom.support_ok());
        let size = l2_beta(&atom.field, 0.25);
        assert!((size - atom.target_size().unwrap()).abs() < 1e-10 * size);
        // the constant: every nonzero entry is the same value
        let nz: Vec<f64> = atom.field.data.iter().filter(|z| z.norm() > 0.0).map(|z| z.re).collect();
        assert!(nz.iter().all(|v| (v - nz[0]).abs() < 1e-14 * nz[0]));
        assert!(make_atom(g, 40, 0.4, 0.25, Ext::Finite(1.0), AtomShape::Flat, &mut rng(1)).is_err());
    }

    #[test]
    fn aperture_is_monotone() {
        let g = g1();
        let f = random_bumps(g, 1, &mut rng(5));
        let spec = TentNormSpec::new(0.0, 1.0);
        assert!((aperture_ratio(&f, &spec, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let mut last = tent_norm(&f, &spec).unwrap();
        for a in [1.5, 2.0, 3.0] {
            let v = tent_norm(&f, &spec.with_aperture(a)).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn embedding_line_validation() {
        let g = g1();
        let f = random_bumps(g, 1, &mut rng(8));
        let a = NormEnd::tent(TentNormSpec::new(0.0, 1.0));
        let same = embedding_check(&f, &a, &a, 32.0).unwrap();
        assert_eq!(same.ratio, 1.0);
        let b = NormEnd::z(TentNormSpec::new(-0.25, 2.0));
        assert!(embedding_check(&f, &a, &b, 32.0).is_ok());
        let off = NormEnd::z(TentNormSpec::new(-0.3, 2.0));
        assert!(matches!(embedding_check(&f, &a, &off, 32.0), Err(FuncSpaceError::Line(_))));
    }

    #[test]
    fn csv_rows() {
        let g = g1();
        let rows = vec![NormRow::new(NormKind::Tent, &TentNormSpec::new(0.0, Ext::Inf), &g, 1.25)];
        let mut buf = Vec::new();
        write_norm_rows(&rows, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("kind,beta,p,aperture"));
        assert!(s.contains("tent,0.0,inf"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn p_triangle_inequality(seed in 0u64..1000, p in 0.3f64..1.0, beta in -0.5f64..0.5) {
            let g = GridSpec::dyadic(1, 32.0, 64, 0.25, 4, 3).unwrap();
            let mut r = rng(seed);
            let f = random_bumps(g, 1, &mut r);
            let h = random_bumps(g, 1, &mut r);
            let s = TentNormSpec::new(beta, p);
            let lhs = tent_norm(&f.add(&h), &s).unwrap().powf(p);
            let rhs = tent_norm(&f, &s).unwrap().powf(p) + tent_norm(&h, &s).unwrap().powf(p);
            prop_assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }
}
