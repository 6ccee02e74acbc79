//! Experiment orchestration: equivalence bands, embedding sweeps, molecular
//! decay profiles, global estimates and the Besov/Z variants, each with a
//! grid-sensitivity record and deterministic JSON output.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cauchy::{lions_grad_op, lions_op, propagate_ladder, solve, CauchyError, CauchyProblem, NodeField};
use crate::exponents::{
    region_membership, source_pair_membership, ExponentError, ExponentProfile, Ext, Region, SpaceParams, Variant,
};
use crate::families::{self, band_pass, gaussian, BumpSource, Family};
use crate::funcspaces::{
    embedding_check, l2_beta, make_atom, tent_norm, validate_line, z_norm, AtomShape, FuncSpaceError, NormEnd,
    TentNormSpec,
};
use crate::grid::{grad_h, GridError, GridSpec, SpaceTimeField, SpatialField};
use crate::operator::{assemble, semigroup, CoefficientField, DiscreteGenerator, OperatorError, Preset};
use crate::spectral::{besov_norm, hardy_sobolev_norm, LPFamily, SpectralError};
use crate::C64;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("geometry out of range: {0}")]
    Geometry(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Cauchy(#[from] CauchyError),
    #[error(transparent)]
    FuncSpace(#[from] FuncSpaceError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Exponent(#[from] ExponentError),
}

/// Norms below this are left out of ratio statistics.
pub const NEGLIGIBLE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    /// Bound on `max/min` of a ratio band.
    pub band: f64,
    /// Bound on the relative drift of the band endpoints under one refinement.
    pub stability: f64,
    /// Bound on implied constants.
    pub constant: f64,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            band: 16.0,
            stability: 0.5,
            constant: 64.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub preset: Preset,
    pub grid: GridSpec,
    pub params: Vec<SpaceParams>,
    pub family: Family,
    pub seed: u64,
    pub samples: usize,
    pub budgets: Budgets,
    /// Wavenumber window `(kmin, kmax)` of band-limited samples; defaults to [`resolved_window`].
    #[serde(default)]
    pub band: Option<(usize, usize)>,
    #[serde(default)]
    pub atom_radius: Option<f64>,
    #[serde(default)]
    pub j_max: Option<usize>,
    /// Exponent profile used for region checks; the Laplacian one when absent.
    #[serde(default)]
    pub profile: Option<ExponentProfile>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Heat characterization: restrict to one side; both when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heat_side: Option<HeatSide>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatSide {
    Extension,
    Gradient,
}

/// `n = 1`: 512 cells of width 1, `t` from `2h^2` to `P^2/512`, 8 levels per octave.
pub fn baseline_grid(n: usize) -> GridSpec {
    match n {
        1 => GridSpec::new(1, 512.0, 512, 2.0, 512.0, 65).expect("valid baseline"),
        _ => GridSpec::new(2, 64.0, 64, 2.0, 16.0, 25).expect("valid baseline"),
    }
}

impl ExperimentSpec {
    pub fn new(name: impl Into<String>, grid: GridSpec) -> Self {
        Self {
            name: name.into(),
            preset: Preset::Identity,
            grid,
            params: Vec::new(),
            family: Family::BandLimited,
            seed: 0,
            samples: 20,
            budgets: Budgets::default(),
            band: None,
            atom_radius: None,
            j_max: None,
            profile: None,
            output: None,
            heat_side: None,
        }
    }

    pub fn with_preset(mut self, preset: Preset) -> Self {
        self.preset = preset;
        self
    }

    pub fn with_params(mut self, params: Vec<SpaceParams>) -> Self {
        self.params = params;
        self
    }

    pub fn with_family(mut self, family: Family, seed: u64, samples: usize) -> Self {
        self.family = family;
        self.seed = seed;
        self.samples = samples;
        self
    }

    pub fn with_budgets(mut self, budgets: Budgets) -> Self {
        self.budgets = budgets;
        self
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn profile(&self) -> ExponentProfile {
        self.profile.unwrap_or_else(|| ExponentProfile::laplacian(self.grid.n as u32))
    }

    fn sample_rng(&self, i: usize) -> rand_chacha::ChaCha8Rng {
        families::rng(self.seed ^ (i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

/// Integer wavenumbers whose scales lie well inside the ladder: `|xi| sqrt(t_max) >= 2`
/// and `|xi| sqrt(t_min) <= 1/2`.
pub fn resolved_window(grid: &GridSpec) -> (usize, usize) {
    let c = grid.period / (2.0 * PI);
    let lo = (c * 2.0 / grid.t_max.sqrt()).ceil().max(1.0) as usize;
    let hi = ((c * 0.5 / grid.t_min.sqrt()).floor() as usize).min(grid.points_per_axis / 4);
    (lo, hi.max(lo + 1))
}

fn nearest_cell(grid: &GridSpec, x: [f64; 2]) -> usize {
    let h = grid.h();
    let m = grid.points_per_axis;
    let c0 = ((x[0] / h).round() as usize) % m;
    let c1 = if grid.n == 2 { ((x[1] / h).round() as usize) % m } else { 0 };
    grid.index([c0, c1])
}

fn without_mean(f: SpatialField) -> SpatialField {
    let m = f.mean();
    f.sub(&SpatialField::constant(f.grid, m))
}

/// Sample `i` of the spec's family, drawn from the spec grid and evaluated on `grid`
/// (same period), with its mean removed.
pub fn spatial_sample(spec: &ExperimentSpec, grid: &GridSpec, i: usize) -> SpatialField {
    let base = &spec.grid;
    let mut rng = spec.sample_rng(i);
    let point = |rng: &mut rand_chacha::ChaCha8Rng| [rng.random_range(0.0..base.period), rng.random_range(0.0..base.period)];
    let f = match spec.family {
        Family::BandLimited => {
            let (lo, hi) = spec.band.unwrap_or_else(|| resolved_window(base));
            let top = rng.random_range(lo + 1..=hi.max(lo + 1));
            band_pass(*grid, lo, top, &mut rng)
        }
        Family::Gaussian => {
            let lo = (2.0 * base.h()).ln();
            let hi = (base.period / 32.0).ln().max(lo);
            let sigma = rng.random_range(lo..=hi).exp();
            gaussian(*grid, point(&mut rng), sigma)
        }
        Family::Atoms => {
            let lo = base.t_min.sqrt().max(2.0 * base.h()).ln();
            let hi = (base.period / 16.0).ln().max(lo);
            let r = rng.random_range(lo..=hi).exp();
            let c = point(&mut rng);
            SpatialField::from_fn(*grid, 1, |x, _| {
                let mut d2 = 0.0;
                for a in 0..grid.n {
                    d2 += grid.displacement(x[a], c[a]).powi(2);
                }
                C64::new(if d2 <= r * r { 1.0 } else { 0.0 }, 0.0)
            })
        }
        Family::Spikes => families::spike(*grid, nearest_cell(grid, point(&mut rng))),
    };
    without_mean(f)
}

/// Values of a headline number on perturbed grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sensitivity {
    pub headline: f64,
    pub t_min_halved: Option<f64>,
    pub t_max_doubled: Option<f64>,
    pub points_doubled: Option<f64>,
}

fn per_octave(grid: &GridSpec) -> usize {
    (2f64.ln() / grid.rho().ln()).round().max(1.0) as usize
}

pub fn t_min_halved(grid: &GridSpec) -> Result<GridSpec, GridError> {
    GridSpec::new(grid.n, grid.period, grid.points_per_axis, grid.t_min / 2.0, grid.t_max, grid.time_levels + per_octave(grid))
}

pub fn t_max_doubled(grid: &GridSpec) -> Result<GridSpec, GridError> {
    GridSpec::new(grid.n, grid.period, grid.points_per_axis, grid.t_min, 2.0 * grid.t_max, grid.time_levels + per_octave(grid))
}

pub fn points_doubled(grid: &GridSpec) -> Result<GridSpec, GridError> {
    GridSpec::new(grid.n, grid.period, 2 * grid.points_per_axis, grid.t_min, grid.t_max, grid.time_levels)
}

fn sensitivity(
    grid: &GridSpec,
    headline: f64,
    eval: &(dyn Fn(&GridSpec) -> Result<f64, VerifyError> + Sync),
) -> Result<Sensitivity, VerifyError> {
    let on = |g: Result<GridSpec, GridError>| -> Result<Option<f64>, VerifyError> {
        match g {
            Ok(g) => eval(&g).map(Some),
            // perturbed ladder not representable on this torus
            Err(_) => Ok(None),
        }
    };
    Ok(Sensitivity {
        headline,
        t_min_halved: on(t_min_halved(grid))?,
        t_max_doubled: on(t_max_doubled(grid))?,
        points_doubled: on(points_doubled(grid))?,
    })
}

/// The preset with its blocks rescaled so the physical coefficients match the spec grid.
fn preset_on(spec: &ExperimentSpec, grid: &GridSpec) -> Preset {
    let mut p = spec.preset;
    let mut m = spec.grid.points_per_axis;
    while m < grid.points_per_axis {
        p = p.refined();
        m *= 2;
    }
    p
}

fn generator_on(spec: &ExperimentSpec, grid: &GridSpec) -> Result<DiscreteGenerator, VerifyError> {
    Ok(assemble(&preset_on(spec, grid).build(*grid)?)?)
}

fn laplacian_on(grid: &GridSpec) -> Result<DiscreteGenerator, VerifyError> {
    Ok(assemble(&CoefficientField::identity(*grid))?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub experiment: String,
    pub quantity: String,
    pub params: SpaceParams,
    pub in_theory: bool,
    pub theory: String,
    pub ratios: Vec<f64>,
    pub excluded: usize,
    pub band: [f64; 2],
    pub spread: f64,
    pub refined_band: [f64; 2],
    pub stability: f64,
    pub sensitivity: Option<Sensitivity>,
    pub budget_band: f64,
    pub budget_stability: f64,
    pub pass: bool,
}

impl EquivalenceReport {
    /// Counts toward a verdict only inside the theory's range.
    pub fn verdict(&self) -> bool {
        !self.in_theory || self.pass
    }
}

type PairEval<'a> = dyn Fn(&GridSpec) -> Result<Vec<(f64, f64)>, VerifyError> + Sync + 'a;

fn band_of(pairs: &[(f64, f64)]) -> (Vec<f64>, usize, [f64; 2]) {
    let mut excluded = 0;
    let ratios: Vec<f64> = pairs
        .iter()
        .filter_map(|&(num, den)| {
            if den.abs() < NEGLIGIBLE || num.abs() < NEGLIGIBLE || !num.is_finite() || !den.is_finite() {
                excluded += 1;
                None
            } else {
                Some(num / den)
            }
        })
        .collect();
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    let band = if ratios.is_empty() { [0.0, 0.0] } else { [lo, hi] };
    (ratios, excluded, band)
}

fn drift(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        f64::INFINITY
    } else {
        (b / a - 1.0).abs()
    }
}

fn equivalence(
    spec: &ExperimentSpec,
    quantity: String,
    params: SpaceParams,
    theory: Result<String, String>,
    eval: &PairEval,
) -> Result<EquivalenceReport, VerifyError> {
    let (in_theory, theory) = match theory {
        Ok(t) => (true, t),
        Err(t) => (false, t),
    };
    let (ratios, excluded, band) = band_of(&eval(&spec.grid)?);
    let (_, _, refined_band) = band_of(&eval(&spec.grid.refined()?)?);
    let headline = (band[0] * band[1]).sqrt();
    let sens = sensitivity(&spec.grid, headline, &|g| {
        let (_, _, b) = band_of(&eval(g)?);
        Ok((b[0] * b[1]).sqrt())
    })?;
    let spread = if band[0] > 0.0 { band[1] / band[0] } else { f64::INFINITY };
    let stability = drift(band[0], refined_band[0]).max(drift(band[1], refined_band[1]));
    let pass = !ratios.is_empty() && spread <= spec.budgets.band && stability <= spec.budgets.stability;
    Ok(EquivalenceReport {
        experiment: spec.name.clone(),
        quantity,
        params,
        in_theory,
        theory,
        ratios,
        excluded,
        band,
        spread,
        refined_band,
        stability,
        sensitivity: Some(sens),
        budget_band: spec.budgets.band,
        budget_stability: spec.budgets.stability,
        pass,
    })
}

fn unsupported(spec: &ExperimentSpec, quantity: String, params: SpaceParams, why: String) -> EquivalenceReport {
    EquivalenceReport {
        experiment: spec.name.clone(),
        quantity,
        params,
        in_theory: false,
        theory: why,
        ratios: Vec::new(),
        excluded: 0,
        band: [0.0, 0.0],
        spread: f64::INFINITY,
        refined_band: [0.0, 0.0],
        stability: f64::INFINITY,
        sensitivity: None,
        budget_band: spec.budgets.band,
        budget_stability: spec.budgets.stability,
        pass: false,
    }
}

fn levels_to_field(grid: GridSpec, levels: Vec<SpatialField>) -> Result<SpaceTimeField, VerifyError> {
    Ok(SpaceTimeField::from_levels(grid, &levels)?)
}

/// `e^{-tL} f` on the ladder, and its discrete gradient.
fn extension_pair(gen: &DiscreteGenerator, f: &SpatialField) -> Result<(SpaceTimeField, SpaceTimeField), VerifyError> {
    let g = gen.grid();
    let u = propagate_ladder(gen, f)?;
    let grads: Vec<SpatialField> = (0..g.time_levels).map(|k| grad_h(&u.level_field(k))).collect();
    Ok((u.clone(), levels_to_field(g, grads)?))
}

fn space_norm(f: &SpaceTimeField, spec: &TentNormSpec, z: bool) -> Result<f64, VerifyError> {
    Ok(if z { z_norm(f, spec)? } else { tent_norm(f, spec)? })
}

fn data_norm(f: &SpatialField, params: &SpaceParams, z: bool) -> Result<f64, VerifyError> {
    let fam = LPFamily::for_grid(&f.grid);
    Ok(if z {
        besov_norm(f, params, &fam)?.value
    } else {
        hardy_sobolev_norm(f, params, &fam)?.value
    })
}

fn is_z(params: &SpaceParams) -> bool {
    matches!(params.variant, Variant::Besov | Variant::Zspace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Extension,
    Gradient,
}

/// Ratios `||E f||` (or `||grad E f||`) over `||f||` for every sample, with `E`
/// the semigroup of `gen_on(grid)`.
fn extension_ratios<'a>(
    spec: &'a ExperimentSpec,
    params: SpaceParams,
    side: Side,
    weight: f64,
    gen_on: &'a (dyn Fn(&GridSpec) -> Result<DiscreteGenerator, VerifyError> + Sync),
) -> impl Fn(&GridSpec) -> Result<Vec<(f64, f64)>, VerifyError> + Sync + 'a {
    move |grid: &GridSpec| {
        let gen = gen_on(grid)?;
        let z = is_z(&params);
        let tspec = TentNormSpec::new(weight, params.p);
        (0..spec.samples)
            .into_par_iter()
            .map(|i| {
                let f = spatial_sample(spec, grid, i);
                let (u, gu) = extension_pair(&gen, &f)?;
                let lhs = match side {
                    Side::Extension => space_norm(&u, &tspec, z)?,
                    Side::Gradient => space_norm(&gu, &tspec, z)?,
                };
                Ok((lhs, data_norm(&f, &params, z)?))
            })
            .collect()
    }
}

fn space_label(params: &SpaceParams, weight: f64, side: Side) -> String {
    let (t, d) = if is_z(params) { ("Z", "B") } else { ("T", "H") };
    let what = match side {
        Side::Extension => "E",
        Side::Gradient => "grad E",
    };
    format!("||{what} f||_{t}^{}_{weight} / ||f||_{d}^{{{},{}}}", params.p, params.s, params.p)
}

/// Heat characterization: `||E f||_{T^p_{(s+1)/2}}` and `||grad E f||_{T^p_{s/2}}`
/// against `||f||_{H^{s,p}}` (`Z` and `B` for the Besov variants), `E` the discrete heat semigroup.
pub fn run_heat_characterization(spec: &ExperimentSpec) -> Result<Vec<EquivalenceReport>, VerifyError> {
    let gen_on = |g: &GridSpec| laplacian_on(g);
    let mut out = Vec::new();
    for params in &spec.params {
        let params = *params;
        for side in [Side::Extension, Side::Gradient] {
            match (spec.heat_side, side) {
                (Some(HeatSide::Extension), Side::Gradient) | (Some(HeatSide::Gradient), Side::Extension) => continue,
                _ => {}
            }
            let (weight, bound, what) = match side {
                Side::Extension => ((params.s + 1.0) / 2.0, 0.0, "extension variant needs s < 0"),
                Side::Gradient => (params.s / 2.0, 1.0, "gradient variant needs s < 1"),
            };
            let quantity = space_label(&params, weight, side);
            if params.p.is_inf() && !is_z(&params) {
                out.push(unsupported(spec, quantity, params, "no Hardy-Sobolev norm at p = inf".into()));
                continue;
            }
            let theory = if params.s < bound {
                Ok(format!("{} (s = {})", what.replace("needs", "with"), params.s))
            } else {
                Err(format!("out of theory: {what}, got s = {}", params.s))
            };
            let eval = extension_ratios(spec, params, side, weight, &gen_on);
            out.push(equivalence(spec, quantity, params, theory, &eval)?);
        }
    }
    Ok(out)
}

/// `||grad E_L u0||_{T^p_{beta+1/2}}` against `||u0||_{H^{2 beta + 1, p}}`, plus
/// `||E_L u0||_{T^p_{beta+1}}` when `-1 < beta < -1/2`.
pub fn run_parabolic_equivalence(spec: &ExperimentSpec) -> Result<Vec<EquivalenceReport>, VerifyError> {
    let profile = spec.profile();
    let gen_on = |g: &GridSpec| generator_on(spec, g);
    let mut out = Vec::new();
    for params in &spec.params {
        let params = *params;
        let member = region_membership(&profile, &params, Region::WellposedHc);
        let theory = |extra: &str| {
            if member.member {
                Ok(format!("well-posedness region: {}{extra}", member.reason))
            } else {
                Err(format!("out of region: {}{extra}", member.reason))
            }
        };
        let beta = params.beta;
        let weight = beta + 0.5;
        let quantity = space_label(&params, weight, Side::Gradient).replace("E f", "E_L u0").replace("||f||", "||u0||");
        if params.p.is_inf() && !is_z(&params) {
            out.push(unsupported(spec, quantity, params, "no Hardy-Sobolev norm at p = inf".into()));
            continue;
        }
        let eval = extension_ratios(spec, params, Side::Gradient, weight, &gen_on);
        out.push(equivalence(spec, quantity, params, theory(""), &eval)?);
        if beta > -1.0 && beta < -0.5 {
            let quantity = space_label(&params, beta + 1.0, Side::Extension).replace("E f", "E_L u0").replace("||f||", "||u0||");
            let eval = extension_ratios(spec, params, Side::Extension, beta + 1.0, &gen_on);
            out.push(equivalence(spec, quantity, params, theory("; -1 < beta < -1/2"), &eval)?);
        }
    }
    Ok(out)
}

/// `||grad R F||_{T^p_{beta+1/2}}` against `||F||_{T^p_{beta+1/2}}` for Lions'
/// operator `R` of the spec's preset, over smooth vector-valued bump sources.
pub fn run_lions_bound(spec: &ExperimentSpec) -> Result<Vec<EquivalenceReport>, VerifyError> {
    let profile = spec.profile();
    let mut out = Vec::new();
    for params in &spec.params {
        let params = *params;
        let weight = params.beta + 0.5;
        let quantity = format!("||grad R F||_T^{}_{weight} / ||F||_T^{}_{weight}", params.p, params.p);
        let member = region_membership(&profile, &params, Region::Lions);
        let theory = if member.member {
            Ok(format!("Lions region: {}", member.reason))
        } else {
            Err(format!("out of region: {}", member.reason))
        };
        let tspec = TentNormSpec::new(weight, params.p);
        let eval = |grid: &GridSpec| -> Result<Vec<(f64, f64)>, VerifyError> {
            let gen = generator_on(spec, grid)?;
            (0..spec.samples)
                .into_par_iter()
                .map(|i| {
                    let b = BumpSource::random(spec.grid, &mut spec.sample_rng(i));
                    let big_f = NodeField::from_fn(*grid, grid.n, |t, x, a| b.eval(t, x, a));
                    let prob = CauchyProblem::new(&gen).with_div_source(big_f.clone());
                    let lhs = tent_norm(&lions_grad_op(&prob)?, &tspec)?;
                    Ok((lhs, tent_norm(&big_f.ladder(), &tspec)?))
                })
                .collect()
        };
        out.push(equivalence(spec, quantity, params, theory, &eval)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow {
    pub j: usize,
    pub region: usize,
    /// `||u||_{L^2_{beta+1}(M_j)}`
    pub value: f64,
    /// `value * |2^{j+1} B|^{1/p - 1/2}`
    pub scaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MolecularReport {
    pub experiment: String,
    pub params: SpaceParams,
    pub radius: f64,
    pub center: usize,
    pub rows: Vec<DecayRow>,
    pub monotone: [bool; 3],
    /// Least-squares slopes of `log2(scaled)` against `j`.
    pub slopes: [f64; 3],
    /// Convexity of `-ln(scaled)` in `j` for region 1, checked for `A = I` only.
    pub region1_convex: Option<bool>,
    pub sensitivity: Sensitivity,
    pub pass: bool,
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// The atom as a divergence source at every integration node: flat in time
/// down to `t = 0`, zero after `r^2`.
fn atom_source(atom: &SpaceTimeField, r2: f64) -> Result<NodeField, VerifyError> {
    let g = atom.grid;
    let ts = g.times();
    let nodes = crate::cauchy::TimeNodes::for_grid(&g);
    let levels: Vec<SpatialField> = nodes
        .t
        .iter()
        .map(|&t| {
            if t > r2 * (1.0 + 1e-12) {
                SpatialField::zeros(g, atom.comps)
            } else {
                let k = ts.iter().position(|&s| s >= t * (1.0 - 1e-12)).unwrap_or(0);
                atom.level_field(k)
            }
        })
        .collect();
    Ok(NodeField::from_levels(g, levels)?)
}

fn decay_rows(
    spec: &ExperimentSpec,
    grid: &GridSpec,
    params: &SpaceParams,
    radius: f64,
    j_max: usize,
) -> Result<(Vec<DecayRow>, usize), VerifyError> {
    let g = *grid;
    let center = g.index([g.points_per_axis / 2, if g.n == 2 { g.points_per_axis / 2 } else { 0 }]);
    let outer = 2f64.powi(j_max as i32 + 1) * radius;
    if outer > g.period / 2.0 {
        return Err(VerifyError::Geometry(format!("2^{} B has radius {outer}, beyond half the torus", j_max + 1)));
    }
    if (2f64.powi(j_max as i32) * radius).powi(2) >= g.t_max {
        return Err(VerifyError::Geometry(format!("t_max = {} leaves M_{j_max}^(3) empty", g.t_max)));
    }
    let atom = make_atom(g, center, radius, params.beta + 0.5, params.p, AtomShape::Flat, &mut families::rng(spec.seed))?;
    let gen = generator_on(spec, grid)?;
    let problem = CauchyProblem::new(&gen).with_div_source(atom_source(&atom.field, radius * radius)?);
    let u = lions_op(&problem)?;
    let ts = g.times();
    let w = g.dt_weights();
    let weight = -2.0 * (params.beta + 1.0);
    let dist: Vec<f64> = (0..g.cells())
        .map(|c| {
            let x = g.position(c);
            let y = g.position(center);
            (0..g.n).map(|a| g.displacement(x[a], y[a]).powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    let vol = g.cell_volume();
    let r = radius;
    let mut rows = Vec::new();
    for j in 4..=j_max {
        let (inner, outer) = (2f64.powi(j as i32) * r, 2f64.powi(j as i32 + 1) * r);
        let measure = g.ball(outer)?.count() as f64 * vol;
        let annulus = |d: f64| d > inner && d <= outer;
        let ball = |d: f64| d <= outer;
        let t8 = (8.0 * r).powi(2);
        let regions: [(&dyn Fn(f64) -> bool, &dyn Fn(f64) -> bool); 3] = [
            (&|t| t <= t8, &annulus),
            (&|t| t > t8 && t < inner * inner, &annulus),
            (&|t| t >= inner * inner && t < outer * outer, &ball),
        ];
        for (i, (in_time, in_space)) in regions.iter().enumerate() {
            let mut s = 0.0;
            for k in 0..ts.len() {
                if !in_time(ts[k]) {
                    continue;
                }
                let lvl = u.level(k);
                let local: f64 = (0..g.cells()).filter(|&c| in_space(dist[c])).map(|c| lvl[c].norm_sqr()).sum();
                s += w[k] * ts[k].powf(weight) * local * vol;
            }
            let value = s.sqrt();
            rows.push(DecayRow {
                j,
                region: i + 1,
                value,
                scaled: value * measure.powf(params.p.recip() - 0.5),
            });
        }
    }
    Ok((rows, center))
}

fn region_series(rows: &[DecayRow], region: usize) -> (Vec<f64>, Vec<f64>) {
    rows.iter().filter(|r| r.region == region).map(|r| (r.j as f64, r.scaled)).unzip()
}

/// Profiles of `u = R(a)` for a `T^p_{beta+1/2}` atom `a` over the regions `M_j^(1,2,3)`.
pub fn run_molecular_decay(spec: &ExperimentSpec) -> Result<MolecularReport, VerifyError> {
    let params = *spec.params.first().ok_or_else(|| VerifyError::Invalid("molecular decay needs (beta, p)".into()))?;
    let g = spec.grid;
    let radius = spec.atom_radius.unwrap_or_else(|| g.t_min.sqrt().max(2.0 * g.h()));
    let j_max = spec.j_max.unwrap_or(7);
    if j_max < 5 {
        return Err(VerifyError::Invalid(format!("j_max = {j_max}; at least two j >= 4 are needed")));
    }
    let (rows, center) = decay_rows(spec, &g, &params, radius, j_max)?;
    let mut monotone = [false; 3];
    let mut slopes = [0.0; 3];
    for i in 0..3 {
        let (js, vals) = region_series(&rows, i + 1);
        monotone[i] = vals.windows(2).all(|w| w[1] < w[0]);
        let logs: Vec<f64> = vals.iter().map(|v| v.max(1e-300).log2()).collect();
        slopes[i] = slope(&js, &logs);
    }
    let region1_convex = (spec.preset == Preset::Identity).then(|| {
        let (_, vals) = region_series(&rows, 1);
        let neg: Vec<f64> = vals.iter().map(|v| -v.max(1e-300).ln()).collect();
        neg.windows(3).all(|w| w[2] - 2.0 * w[1] + w[0] > 0.0)
    });
    let sens = sensitivity(&g, slopes[1], &|grid| {
        let (rows, _) = decay_rows(spec, grid, &params, radius, j_max)?;
        let (js, vals) = region_series(&rows, 2);
        let logs: Vec<f64> = vals.iter().map(|v| v.max(1e-300).log2()).collect();
        Ok(slope(&js, &logs))
    })?;
    let pass = monotone.iter().all(|&m| m) && region1_convex.unwrap_or(true);
    Ok(MolecularReport {
        experiment: spec.name.clone(),
        params,
        radius,
        center,
        rows,
        monotone,
        slopes,
        region1_convex,
        sensitivity: sens,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopStats {
    pub ratios: Vec<f64>,
    pub max: f64,
    pub budget: f64,
    pub pass: bool,
}

impl HopStats {
    fn new(ratios: Vec<f64>, budget: f64) -> Self {
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        Self {
            pass: !ratios.is_empty() && max <= budget,
            ratios,
            max,
            budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingReport {
    pub experiment: String,
    pub triple: [TentNormSpec; 3],
    pub hop1: HopStats,
    pub hop2: HopStats,
    pub atom_radii: Vec<f64>,
    pub atom_hop1: Vec<f64>,
    pub atom_hop2: Vec<f64>,
    /// Largest `|ratio / ratio at the smallest radius - 1|` over both hops.
    pub atom_deviation: f64,
    pub atom_budget: f64,
    pub sensitivity: Sensitivity,
    pub pass: bool,
}

/// Relative tolerance of atom-input ratios across radii.
pub const ATOM_SCALE_TOLERANCE: f64 = 0.2;

/// Validates `T^{p0}_{beta0} -> Z^{p1}_{beta1} -> T^{p2}_{beta2}` with strict inequalities.
pub fn validate_triple(n: usize, triple: &[TentNormSpec; 3]) -> Result<(), VerifyError> {
    let [a, b, c] = triple;
    if !(a.p.lt(b.p) && b.p.lt(c.p)) {
        return Err(VerifyError::Invalid(format!("need p0 < p1 < p2, got {}, {}, {}", a.p, b.p, c.p)));
    }
    validate_line(n, a, b)?;
    validate_line(n, b, c)?;
    Ok(())
}

fn hop_ratios(f: &SpaceTimeField, triple: &[TentNormSpec; 3], budget: f64) -> Result<(f64, f64), VerifyError> {
    let [a, b, c] = *triple;
    let h1 = embedding_check(f, &NormEnd::tent(a), &NormEnd::z(b), budget)?;
    let h2 = embedding_check(f, &NormEnd::z(b), &NormEnd::tent(c), budget)?;
    Ok((h1.ratio, h2.ratio))
}

fn bump_fields(spec: &ExperimentSpec, grid: &GridSpec) -> Vec<SpaceTimeField> {
    (0..spec.samples)
        .into_par_iter()
        .map(|i| {
            let b = BumpSource::random(spec.grid, &mut spec.sample_rng(i));
            SpaceTimeField::from_fn(*grid, 1, |t, x, a| b.eval(t, x, a))
        })
        .collect()
}

/// Both hops of the `T -> Z -> T` chain over smooth random fields and over atoms of growing radius.
pub fn run_embedding_sweep(spec: &ExperimentSpec) -> Result<EmbeddingReport, VerifyError> {
    if spec.params.len() != 3 {
        return Err(VerifyError::Invalid(format!("an embedding triple needs 3 parameter pairs, got {}", spec.params.len())));
    }
    let triple = [0, 1, 2].map(|i| TentNormSpec::new(spec.params[i].beta, spec.params[i].p));
    let g = spec.grid;
    validate_triple(g.n, &triple)?;
    let budget = spec.budgets.constant.min(spec.budgets.band.max(32.0));
    let hops = |grid: &GridSpec| -> Result<Vec<(f64, f64)>, VerifyError> {
        bump_fields(spec, grid).par_iter().map(|f| hop_ratios(f, &triple, budget)).collect()
    };
    let pairs = hops(&g)?;
    let hop1 = HopStats::new(pairs.iter().map(|p| p.0).collect(), budget);
    let hop2 = HopStats::new(pairs.iter().map(|p| p.1).collect(), budget);
    let r0 = spec.atom_radius.unwrap_or(4.5 * g.h());
    let atom_radii: Vec<f64> = (0..4).map(|j| r0 * 2f64.powi(j)).collect();
    let center = g.index([g.points_per_axis / 2, if g.n == 2 { g.points_per_axis / 2 } else { 0 }]);
    let atom_pairs: Vec<(f64, f64)> = atom_radii
        .par_iter()
        .map(|&r| {
            let atom = make_atom(g, center, r, triple[0].beta, triple[0].p, AtomShape::Flat, &mut families::rng(spec.seed))?;
            hop_ratios(&atom.field, &triple, budget)
        })
        .collect::<Result<_, VerifyError>>()?;
    let (atom_hop1, atom_hop2): (Vec<f64>, Vec<f64>) = atom_pairs.into_iter().unzip();
    let dev = |v: &[f64]| v.iter().map(|x| (x / v[0] - 1.0).abs()).fold(0.0, f64::max);
    let atom_deviation = dev(&atom_hop1).max(dev(&atom_hop2));
    let headline = hop1.max.max(hop2.max);
    let sens = sensitivity(&g, headline, &|grid| {
        Ok(hops(grid)?.iter().fold(0.0, |m: f64, p| m.max(p.0).max(p.1)))
    })?;
    let pass = hop1.pass && hop2.pass && atom_deviation <= ATOM_SCALE_TOLERANCE;
    Ok(EmbeddingReport {
        experiment: spec.name.clone(),
        triple,
        hop1,
        hop2,
        atom_radii,
        atom_hop1,
        atom_hop2,
        atom_deviation,
        atom_budget: ATOM_SCALE_TOLERANCE,
        sensitivity: sens,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalRecord {
    pub bp: SpaceParams,
    pub gq: SpaceParams,
    pub condition: String,
    pub grad_u: f64,
    pub u0: f64,
    pub big_f: f64,
    pub f: f64,
    pub constant: f64,
    /// `||u - E_L u0||_{T^p_{beta+1}}`
    pub remainder: f64,
    pub remainder_finite: bool,
    pub budget: f64,
    pub pass: bool,
}

/// `||grad u||_{T^p_{beta+1/2}} <= C (||u0||_{H^{2beta+1,p}} + ||F||_{T^p_{beta+1/2}} + ||f||_{T^q_gamma})`
/// for `u = solve(problem)`.
pub fn global_estimate(
    problem: &CauchyProblem,
    bp: SpaceParams,
    gq: SpaceParams,
    profile: &ExponentProfile,
    budget: f64,
) -> Result<GlobalRecord, VerifyError> {
    let cond = source_pair_membership(profile, &bp, &gq);
    if !cond.member {
        return Err(VerifyError::Invalid(format!("source pair condition: {}", cond.reason)));
    }
    let g = problem.grid();
    let u = solve(problem)?;
    let grads: Vec<SpatialField> = (0..g.time_levels).map(|k| grad_h(&u.level_field(k))).collect();
    let gu = levels_to_field(g, grads)?;
    let weight = TentNormSpec::new(bp.beta + 0.5, bp.p);
    let grad_u = tent_norm(&gu, &weight)?;
    let u0 = match &problem.u0 {
        Some(v) => hardy_sobolev_norm(v, &SpaceParams::from_beta(bp.beta, bp.p, Variant::HardySobolev), &LPFamily::for_grid(&g))?.value,
        None => 0.0,
    };
    let big_f = match &problem.big_f {
        Some(v) => tent_norm(&v.ladder(), &weight)?,
        None => 0.0,
    };
    let f = match &problem.f {
        Some(v) => tent_norm(&v.ladder(), &TentNormSpec::new(gq.beta, gq.p))?,
        None => 0.0,
    };
    let rest = match &problem.u0 {
        Some(v) => u.sub(&propagate_ladder(problem.generator, v)?),
        None => u.clone(),
    };
    let remainder = tent_norm(&rest, &TentNormSpec::new(bp.beta + 1.0, bp.p))?;
    let data = u0 + big_f + f;
    let constant = if grad_u == 0.0 { 0.0 } else if data == 0.0 { f64::INFINITY } else { grad_u / data };
    Ok(GlobalRecord {
        bp,
        gq,
        condition: cond.reason,
        grad_u,
        u0,
        big_f,
        f,
        constant,
        remainder,
        remainder_finite: remainder.is_finite(),
        budget,
        pass: constant <= budget && remainder.is_finite(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalReport {
    pub experiment: String,
    pub record: GlobalRecord,
    pub sensitivity: Sensitivity,
    pub pass: bool,
}

fn global_on(spec: &ExperimentSpec, grid: &GridSpec, bp: SpaceParams, gq: SpaceParams) -> Result<GlobalRecord, VerifyError> {
    let gen = generator_on(spec, grid)?;
    let mut rng = spec.sample_rng(usize::MAX - 1);
    let big = BumpSource::random(spec.grid, &mut rng);
    let small = BumpSource::random(spec.grid, &mut rng);
    let problem = CauchyProblem::new(&gen)
        .with_u0(spatial_sample(spec, grid, 0))
        .with_div_source(NodeField::from_fn(*grid, grid.n, |t, x, a| big.eval(t, x, a)))
        .with_source(NodeField::from_fn(*grid, 1, |t, x, a| small.eval(t, x, a)));
    global_estimate(&problem, bp, gq, &spec.profile(), spec.budgets.constant)
}

/// The global estimate for mixed data `u0`, `F`, `f` drawn from the spec.
pub fn run_global_estimate(spec: &ExperimentSpec) -> Result<GlobalReport, VerifyError> {
    let (bp, gq) = match spec.params.as_slice() {
        [bp] => (*bp, *bp),
        [bp, gq] => (*bp, *gq),
        _ => return Err(VerifyError::Invalid("global estimate needs (beta, p) and optionally (gamma, q)".into())),
    };
    let record = global_on(spec, &spec.grid, bp, gq)?;
    let sens = sensitivity(&spec.grid, record.constant, &|g| Ok(global_on(spec, g, bp, gq)?.constant))?;
    Ok(GlobalReport {
        experiment: spec.name.clone(),
        pass: record.pass,
        record,
        sensitivity: sens,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzRecord {
    pub wavenumbers: Vec<usize>,
    /// `||grad e^{t Delta} g||_{Z^inf_{1/2}} / max |grad_h g|`
    pub ratios: Vec<f64>,
    pub budget: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCheck {
    pub s: f64,
    /// `||f||_{B^s_{2,2}} / ||f||_{H^{s,2}}` per sample.
    pub ratios: Vec<f64>,
    pub max_deviation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BesovReport {
    pub experiment: String,
    pub equivalence: Vec<EquivalenceReport>,
    pub lipschitz: LipschitzRecord,
    pub cross_check: CrossCheck,
    pub pass: bool,
}

pub const LIPSCHITZ_BAND: f64 = 8.0;
pub const CROSS_CHECK_TOLERANCE: f64 = 0.1;

/// Lipschitz endpoint on single low modes `cos(2 pi k x_1 / P)`.
pub fn lipschitz_endpoint(grid: &GridSpec, modes: &[usize]) -> Result<LipschitzRecord, VerifyError> {
    let gen = laplacian_on(grid)?;
    let ratios: Vec<f64> = modes
        .par_iter()
        .map(|&k| -> Result<f64, VerifyError> {
            let w = 2.0 * PI * k as f64 / grid.period;
            let g = SpatialField::from_fn(*grid, 1, |x, _| C64::new((w * x[0]).cos(), 0.0));
            let (_, gu) = extension_pair(&gen, &g)?;
            let lhs = z_norm(&gu, &TentNormSpec::new(0.5, Ext::Inf))?;
            let lip = grad_h(&g).data.iter().map(|z| z.norm()).fold(0.0, f64::max);
            Ok(lhs / lip)
        })
        .collect::<Result<_, _>>()?;
    let pass = ratios.iter().all(|&r| r >= 1.0 / LIPSCHITZ_BAND && r <= LIPSCHITZ_BAND);
    Ok(LipschitzRecord {
        wavenumbers: modes.to_vec(),
        ratios,
        budget: LIPSCHITZ_BAND,
        pass,
    })
}

/// Z-space analogues of the heat characterization, the Lipschitz endpoint and
/// the `p = 2` Besov/Hardy-Sobolev cross-check.
pub fn run_besov_suite(spec: &ExperimentSpec) -> Result<BesovReport, VerifyError> {
    let mut zspec = spec.clone();
    for p in &mut zspec.params {
        p.variant = Variant::Besov;
    }
    let equivalence = run_heat_characterization(&zspec)?;
    let lipschitz = lipschitz_endpoint(&spec.grid, &[1, 2, 3])?;
    let s = spec.params.first().map_or(-0.5, |p| p.s);
    let fam = LPFamily::for_grid(&spec.grid);
    let ratios: Vec<f64> = (0..spec.samples)
        .into_par_iter()
        .map(|i| -> Result<Option<f64>, VerifyError> {
            let f = spatial_sample(spec, &spec.grid, i);
            let b = besov_norm(&f, &SpaceParams::from_s(s, Ext::Finite(2.0), Variant::Besov), &fam)?.value;
            let h = hardy_sobolev_norm(&f, &SpaceParams::from_s(s, Ext::Finite(2.0), Variant::HardySobolev), &fam)?.value;
            Ok((h > NEGLIGIBLE).then(|| b / h))
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    let max_deviation = ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    let cross_check = CrossCheck {
        s,
        pass: max_deviation <= CROSS_CHECK_TOLERANCE,
        ratios,
        max_deviation,
    };
    let pass = equivalence.iter().all(EquivalenceReport::verdict) && lipschitz.pass && cross_check.pass;
    Ok(BesovReport {
        experiment: spec.name.clone(),
        equivalence,
        lipschitz,
        cross_check,
        pass,
    })
}

/// `||e^{-tL} div f||_{T^2_0} / ||f||_2` for mean-zero vector fields.
pub fn endpoint_band(gen: &DiscreteGenerator, fields: &[SpatialField]) -> Result<Vec<f64>, VerifyError> {
    fields
        .par_iter()
        .map(|f| {
            let rec = crate::cauchy::endpoint_divergence_semigroup(gen, f, Ext::Finite(2.0))?;
            rec.ratio.ok_or_else(|| VerifyError::Invalid("zero field in the endpoint band".into()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Heat,
    Parabolic,
    Lions,
    Molecular,
    Embeddings,
    Global,
    Besov,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Heat,
        Experiment::Parabolic,
        Experiment::Lions,
        Experiment::Molecular,
        Experiment::Embeddings,
        Experiment::Global,
        Experiment::Besov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Heat => "heat",
            Experiment::Parabolic => "parabolic",
            Experiment::Lions => "lions",
            Experiment::Molecular => "molecular",
            Experiment::Embeddings => "embeddings",
            Experiment::Global => "global",
            Experiment::Besov => "besov",
        }
    }
}

/// Spec, hash and result of one experiment, serialized as the JSON run record.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub experiment: Experiment,
    pub spec_hash: String,
    pub spec: ExperimentSpec,
    pub pass: bool,
    pub verdict: String,
    pub result: serde_json::Value,
}

impl RunRecord {
    pub fn to_json(&self) -> Result<String, VerifyError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn eq_verdict(reports: &[EquivalenceReport]) -> (bool, String) {
    let pass = reports.iter().all(EquivalenceReport::verdict);
    let worst = reports
        .iter()
        .filter(|r| r.in_theory)
        .map(|r| r.spread)
        .fold(0.0, f64::max);
    let out = reports.iter().filter(|r| !r.in_theory).count();
    (pass, format!("{} reports, worst in-theory spread {worst:.3}, {out} out of theory", reports.len()))
}

/// Runs one experiment and, when the spec names an output directory, writes
/// `<name>.json` there (plus a CSV table for decay profiles and sweeps).
pub fn run(experiment: Experiment, spec: &ExperimentSpec) -> Result<RunRecord, VerifyError> {
    let (pass, verdict, result, csv): (bool, String, serde_json::Value, Option<Vec<u8>>) = match experiment {
        Experiment::Heat => {
            let r = run_heat_characterization(spec)?;
            let (pass, v) = eq_verdict(&r);
            (pass, v, serde_json::to_value(&r)?, None)
        }
        Experiment::Parabolic => {
            let r = run_parabolic_equivalence(spec)?;
            let (pass, v) = eq_verdict(&r);
            (pass, v, serde_json::to_value(&r)?, None)
        }
        Experiment::Lions => {
            let r = run_lions_bound(spec)?;
            let (pass, v) = eq_verdict(&r);
            (pass, v, serde_json::to_value(&r)?, None)
        }
        Experiment::Molecular => {
            let r = run_molecular_decay(spec)?;
            let v = format!("monotone {:?}, slopes {:?}", r.monotone, r.slopes.map(|s| (s * 1000.0).round() / 1000.0));
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in &r.rows {
                w.serialize(row)?;
            }
            let bytes = w.into_inner().map_err(|e| VerifyError::Io(e.into_error()))?;
            (r.pass, v, serde_json::to_value(&r)?, Some(bytes))
        }
        Experiment::Embeddings => {
            let r = run_embedding_sweep(spec)?;
            let v = format!(
                "hop maxima {:.3} / {:.3}, atom deviation {:.3}",
                r.hop1.max, r.hop2.max, r.atom_deviation
            );
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["sample", "hop1", "hop2"])?;
            for (i, (a, b)) in r.hop1.ratios.iter().zip(&r.hop2.ratios).enumerate() {
                w.write_record([i.to_string(), a.to_string(), b.to_string()])?;
            }
            let bytes = w.into_inner().map_err(|e| VerifyError::Io(e.into_error()))?;
            (r.pass, v, serde_json::to_value(&r)?, Some(bytes))
        }
        Experiment::Global => {
            let r = run_global_estimate(spec)?;
            let v = format!("constant {:.4} (budget {})", r.record.constant, r.record.budget);
            (r.pass, v, serde_json::to_value(&r)?, None)
        }
        Experiment::Besov => {
            let r = run_besov_suite(spec)?;
            let (_, v) = eq_verdict(&r.equivalence);
            let v = format!("{v}, Lipschitz ratios within {}: {}", LIPSCHITZ_BAND, r.lipschitz.pass);
            (r.pass, v, serde_json::to_value(&r)?, None)
        }
    };
    let record = RunRecord {
        experiment,
        spec_hash: spec.hash(),
        spec: spec.clone(),
        pass,
        verdict: format!("{} {}: {}", if pass { "PASS" } else { "FAIL" }, spec.name, verdict),
        result,
    };
    if let Some(dir) = &spec.output {
        write_outputs(dir, &spec.name, &record, csv.as_deref())?;
    }
    Ok(record)
}

fn write_outputs(dir: &Path, name: &str, record: &RunRecord, csv: Option<&[u8]>) -> Result<(), VerifyError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{name}.json")), record.to_json()?)?;
    if let Some(bytes) = csv {
        std::fs::write(dir.join(format!("{name}.csv")), bytes)?;
    }
    Ok(())
}

/// Runs independent experiments concurrently; results keep the input order.
pub fn run_queue(jobs: &[(Experiment, ExperimentSpec)]) -> Vec<Result<RunRecord, VerifyError>> {
    jobs.par_iter().map(|(e, s)| run(*e, s)).collect()
}

/// `e^{-tL}` applied to a field at one time, as used by the examples.
pub fn evolve(gen: &DiscreteGenerator, f: &SpatialField, t: f64) -> Result<SpatialField, VerifyError> {
    Ok(semigroup(gen, f, t)?)
}

/// `||F||_{L^2_beta}` of a ladder field, re-exported for reports.
pub fn weighted_l2(f: &SpaceTimeField, beta: f64) -> f64 {
    l2_beta(f, beta)
}
