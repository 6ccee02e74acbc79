//! Critical exponents of the operator and the well-posedness regions they carve
//! out of the `(1/p, beta)` plane.
//!
//! All formulas work on reciprocals so that `p = inf` is handled by `1/inf = 0`
//! instead of a large float.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Absolute tolerance for the linear constraint `2 beta - n/p = 2 gamma - n/q`.
pub const LINE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExponentError {
    #[error("{what} = {value} is outside its domain ({domain})")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("invalid exponent profile: {0}")]
    InvalidProfile(String),
    #[error("cannot parse exponent `{0}`")]
    Parse(String),
}

/// A Lebesgue exponent in `(0, inf]` with an explicit symbolic infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ext {
    Finite(f64),
    Inf,
}

impl Ext {
    /// `1/p`, with `1/inf = 0`.
    pub fn recip(self) -> f64 {
        match self {
            Ext::Finite(p) => 1.0 / p,
            Ext::Inf => 0.0,
        }
    }

    /// Inverse of [`Ext::recip`]: `0` maps to `inf`.
    pub fn from_recip(r: f64) -> Ext {
        if r == 0.0 {
            Ext::Inf
        } else {
            Ext::Finite(1.0 / r)
        }
    }

    pub fn is_inf(self) -> bool {
        matches!(self, Ext::Inf)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Ext::Finite(p) => Some(p),
            Ext::Inf => None,
        }
    }

    /// Ordering on `(0, inf]`.
    pub fn lt(self, other: Ext) -> bool {
        self.recip() > other.recip()
    }

    pub fn le(self, other: Ext) -> bool {
        self.recip() >= other.recip()
    }
}

impl From<f64> for Ext {
    fn from(p: f64) -> Self {
        if p.is_infinite() && p > 0.0 {
            Ext::Inf
        } else {
            Ext::Finite(p)
        }
    }
}

impl fmt::Display for Ext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ext::Finite(p) => write!(f, "{p}"),
            Ext::Inf => write!(f, "inf"),
        }
    }
}

impl FromStr for Ext {
    type Err = ExponentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "+inf" | "∞" => Ok(Ext::Inf),
            _ => {
                let v = parse_real(t).ok_or_else(|| ExponentError::Parse(s.to_string()))?;
                Ok(Ext::from(v))
            }
        }
    }
}

/// Accepts plain decimals and simple fractions such as `4/3` or `-3/4`.
pub fn parse_real(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let a: f64 = a.trim().parse().ok()?;
        let b: f64 = b.trim().parse().ok()?;
        if b == 0.0 {
            return None;
        }
        Some(a / b)
    } else {
        s.parse().ok()
    }
}

impl Serialize for Ext {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Ext::Finite(p) => s.serialize_f64(*p),
            Ext::Inf => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Ext {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Ext::from(v)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Hölder conjugate `p'` with `1/p + 1/p' = 1`.
pub fn holder_conjugate(p: Ext) -> Result<Ext, ExponentError> {
    let r = p.recip();
    if r > 1.0 || r.is_nan() {
        return Err(ExponentError::OutOfDomain {
            what: "p",
            value: 1.0 / r,
            domain: "[1, inf]",
        });
    }
    Ok(Ext::from_recip(1.0 - r))
}

/// The four critical numbers of `L` and `L*` together with the dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentProfile {
    pub n: u32,
    pub p_minus_l: f64,
    pub q_plus_l: Ext,
    pub p_minus_lstar: f64,
    pub q_plus_lstar: Ext,
}

impl ExponentProfile {
    /// Validated constructor: `p_-` in `[n/(n+1), 2n/(n+2))`, `q_+ > 2`.
    pub fn new(
        n: u32,
        p_minus_l: f64,
        q_plus_l: Ext,
        p_minus_lstar: f64,
        q_plus_lstar: Ext,
    ) -> Result<Self, ExponentError> {
        let prof = Self::new_unchecked(n, p_minus_l, q_plus_l, p_minus_lstar, q_plus_lstar);
        prof.validate()?;
        Ok(prof)
    }

    /// Skips the range checks; the formulas are still well defined for
    /// `p_- > 0`, which is handy when probing them outside the operator range.
    pub fn new_unchecked(
        n: u32,
        p_minus_l: f64,
        q_plus_l: Ext,
        p_minus_lstar: f64,
        q_plus_lstar: Ext,
    ) -> Self {
        Self {
            n,
            p_minus_l,
            q_plus_l,
            p_minus_lstar,
            q_plus_lstar,
        }
    }

    /// Profile of the Laplacian: `p_- = n/(n+1)`, `q_+ = inf`, self-dual.
    pub fn laplacian(n: u32) -> Self {
        let nf = n as f64;
        Self::new_unchecked(n, nf / (nf + 1.0), Ext::Inf, nf / (nf + 1.0), Ext::Inf)
    }

    pub fn validate(&self) -> Result<(), ExponentError> {
        if self.n == 0 {
            return Err(ExponentError::InvalidProfile("dimension must be positive".into()));
        }
        let nf = self.n as f64;
        let lo = nf / (nf + 1.0);
        let hi = 2.0 * nf / (nf + 2.0);
        for (name, v) in [("p_minus_L", self.p_minus_l), ("p_minus_Lstar", self.p_minus_lstar)] {
            if !(v >= lo - 1e-15 && v < hi) {
                return Err(ExponentError::InvalidProfile(format!(
                    "{name} = {v} not in [{lo}, {hi})"
                )));
            }
        }
        for (name, q) in [("q_plus_L", self.q_plus_l), ("q_plus_Lstar", self.q_plus_lstar)] {
            if q.recip() >= 0.5 {
                return Err(ExponentError::InvalidProfile(format!("{name} = {q} must exceed 2")));
            }
        }
        Ok(())
    }

    /// Profile of `L*` (roles of the two operators swapped).
    pub fn dual(&self) -> Self {
        Self::new_unchecked(
            self.n,
            self.p_minus_lstar,
            self.q_plus_lstar,
            self.p_minus_l,
            self.q_plus_l,
        )
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    /// `1 / q_+(L*)'`, that is `1 - 1/q_+(L*)`.
    fn inv_qstar_conj(&self) -> f64 {
        1.0 - self.q_plus_lstar.recip()
    }

    /// `1 / p_-(s, L)`.
    pub fn inv_p_minus_s(&self, s: f64) -> Result<f64, ExponentError> {
        check_s(s)?;
        let inv = 1.0 / self.p_minus_l;
        Ok(if s >= 0.0 {
            inv + s / self.nf()
        } else {
            (1.0 + s) * inv - s * self.inv_qstar_conj()
        })
    }

    pub fn p_minus_s(&self, s: f64) -> Result<f64, ExponentError> {
        Ok(1.0 / self.inv_p_minus_s(s)?)
    }

    /// `p_+(s, L) = max{p_-(-s, L*), 1}'`.
    pub fn p_plus_s(&self, s: f64) -> Result<Ext, ExponentError> {
        check_s(s)?;
        let inv = self.dual().inv_p_minus_s(-s)?;
        // max{p, 1} in reciprocal form is min{1/p, 1}
        let inv_max = inv.min(1.0);
        Ok(Ext::from_recip(1.0 - inv_max))
    }

    pub fn beta_l(&self) -> f64 {
        -0.5 - 0.5 * self.nf() * (1.0 / self.p_minus_l - 1.0)
    }

    pub fn p_l_beta(&self, beta: f64) -> Result<f64, ExponentError> {
        check_beta(beta)?;
        let n = self.nf();
        let p = self.p_minus_l;
        Ok(n * p / (n + (2.0 * beta + 1.0) * p))
    }

    /// `1 / p~_L(beta)`; every branch is affine in `beta`.
    pub fn inv_p_tilde(&self, beta: f64) -> Result<f64, ExponentError> {
        check_beta(beta)?;
        let n = self.nf();
        let inv_pl = 1.0 / self.p_minus_l + (2.0 * beta + 1.0) / n;
        if self.p_minus_l >= 1.0 {
            if beta >= -0.5 {
                Ok(inv_pl)
            } else {
                self.inv_p_minus_s(2.0 * beta + 1.0)
            }
        } else {
            let bl = self.beta_l();
            if beta >= bl {
                Ok(inv_pl)
            } else {
                // (bl+1) q / ((bl+1) q + beta - bl), written with 1/q so that q = inf works
                let iq = self.q_plus_lstar.recip();
                Ok(1.0 + (beta - bl) * iq / (bl + 1.0))
            }
        }
    }

    pub fn p_tilde(&self, beta: f64) -> Result<f64, ExponentError> {
        Ok(1.0 / self.inv_p_tilde(beta)?)
    }

    pub fn p_flat(&self, gamma: f64) -> Result<f64, ExponentError> {
        if !(gamma > -0.5) {
            return Err(ExponentError::OutOfDomain {
                what: "gamma",
                value: gamma,
                domain: "(-1/2, inf)",
            });
        }
        let n = self.nf();
        let m = self.p_minus_l.max(1.0);
        Ok(n * m / (n + (2.0 * gamma + 1.0) * m))
    }
}

fn check_s(s: f64) -> Result<(), ExponentError> {
    if (-1.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(ExponentError::OutOfDomain {
            what: "s",
            value: s,
            domain: "[-1, 1]",
        })
    }
}

fn check_beta(beta: f64) -> Result<(), ExponentError> {
    if beta > -1.0 {
        Ok(())
    } else {
        Err(ExponentError::OutOfDomain {
            what: "beta",
            value: beta,
            domain: "(-1, inf)",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    HardySobolev,
    Besov,
    Tent,
    Zspace,
}

/// A regularity/integrability pair with `s = 2 beta + 1` kept in sync.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceParams {
    pub s: f64,
    pub beta: f64,
    pub p: Ext,
    pub variant: Variant,
}

impl SpaceParams {
    pub fn from_s(s: f64, p: Ext, variant: Variant) -> Self {
        Self {
            s,
            beta: (s - 1.0) / 2.0,
            p,
            variant,
        }
    }

    pub fn from_beta(beta: f64, p: Ext, variant: Variant) -> Self {
        Self {
            s: 2.0 * beta + 1.0,
            beta,
            p,
            variant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    WellposedHc,
    Identification,
    Lions,
    SourcePair,
}

impl FromStr for Region {
    type Err = ExponentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wellposed_hc" => Ok(Region::WellposedHc),
            "identification" => Ok(Region::Identification),
            "lions" => Ok(Region::Lions),
            "source_pair" => Ok(Region::SourcePair),
            _ => Err(ExponentError::Parse(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Membership {
    pub member: bool,
    pub reason: String,
}

impl Membership {
    fn yes(reason: String) -> Self {
        Self {
            member: true,
            reason,
        }
    }
    fn no(reason: String) -> Self {
        Self {
            member: false,
            reason,
        }
    }
}

/// Membership of `(beta, p)` in one of the single-pair regions. For
/// [`Region::SourcePair`] use [`source_pair_membership`].
pub fn region_membership(
    profile: &ExponentProfile,
    params: &SpaceParams,
    region: Region,
) -> Membership {
    let beta = params.beta;
    let inv_p = params.p.recip();
    match region {
        Region::WellposedHc => {
            if !(beta > -1.0 && beta < 0.0) {
                return Membership::no(format!("beta = {beta} outside (-1, 0)"));
            }
            below_p_tilde(profile, beta, inv_p)
        }
        Region::Lions => {
            if !(beta > -1.0) {
                return Membership::no(format!("beta = {beta} must exceed -1"));
            }
            below_p_tilde(profile, beta, inv_p)
        }
        Region::Identification => {
            let s = params.s;
            let lo = match profile.inv_p_minus_s(s) {
                Ok(v) => v,
                Err(e) => return Membership::no(e.to_string()),
            };
            let hi = match profile.p_plus_s(s) {
                Ok(v) => v.recip(),
                Err(e) => return Membership::no(e.to_string()),
            };
            if inv_p < lo && inv_p > hi {
                Membership::yes(format!("1/p = {inv_p} strictly inside ({hi}, {lo})"))
            } else {
                Membership::no(format!("1/p = {inv_p} not strictly inside ({hi}, {lo})"))
            }
        }
        Region::SourcePair => source_pair_membership(profile, params, params),
    }
}

fn below_p_tilde(profile: &ExponentProfile, beta: f64, inv_p: f64) -> Membership {
    match profile.inv_p_tilde(beta) {
        Ok(inv_pt) => {
            // p~ < p <= inf  <=>  0 <= 1/p < 1/p~
            if inv_p < inv_pt {
                Membership::yes(format!("1/p = {inv_p} < 1/p~ = {inv_pt}"))
            } else {
                Membership::no(format!("1/p = {inv_p} >= 1/p~ = {inv_pt}"))
            }
        }
        Err(e) => Membership::no(e.to_string()),
    }
}

/// Source pair condition: `gamma >= beta` and `2 beta - n/p = 2 gamma - n/q`.
/// The explanation also notes whether `q > p_flat(gamma)` holds.
pub fn source_pair_membership(
    profile: &ExponentProfile,
    bp: &SpaceParams,
    gq: &SpaceParams,
) -> Membership {
    let n = profile.n as f64;
    let (beta, gamma) = (bp.beta, gq.beta);
    let lhs = 2.0 * beta - n * bp.p.recip();
    let rhs = 2.0 * gamma - n * gq.p.recip();
    let flat_note = match profile.p_flat(gamma) {
        Ok(pf) if gq.p.recip() < 1.0 / pf => format!("; q > p_flat(gamma) = {pf}"),
        Ok(pf) => format!("; q <= p_flat(gamma) = {pf}"),
        Err(_) => "; p_flat undefined (gamma <= -1/2)".to_string(),
    };
    if gamma < beta {
        return Membership::no(format!("gamma = {gamma} < beta = {beta}{flat_note}"));
    }
    if (lhs - rhs).abs() > LINE_TOL {
        return Membership::no(format!(
            "line condition violated: {lhs} != {rhs}{flat_note}"
        ));
    }
    Membership::yes(format!("gamma >= beta and 2beta - n/p = {lhs}{flat_note}"))
}

/// Vertices `(1/p, beta)` of the boundary of a region, ready for plotting.
///
/// Each affine piece of the boundary is sampled with `resolution` points and
/// the break points (`beta = -1/2` or `beta = beta(L)`) are inserted exactly.
pub fn region_boundary_polyline(
    profile: &ExponentProfile,
    region: Region,
    resolution: usize,
) -> Result<Vec<(f64, f64)>, ExponentError> {
    if resolution < 2 {
        return Err(ExponentError::OutOfDomain {
            what: "resolution",
            value: resolution as f64,
            domain: "[2, inf)",
        });
    }
    let betas = |lo: f64, hi: f64, breaks: &[f64]| -> Vec<f64> {
        let mut v: Vec<f64> = (0..resolution)
            .map(|i| lo + (hi - lo) * i as f64 / (resolution - 1) as f64)
            .collect();
        for &b in breaks {
            if b > lo && b < hi && !v.iter().any(|&x| x == b) {
                v.push(b);
            }
        }
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    };
    let breaks = [-0.5, profile.beta_l()];
    match region {
        Region::WellposedHc | Region::Lions => {
            let top = if region == Region::WellposedHc { 0.0 } else { 1.0 };
            let mut pts = vec![(0.0, -1.0), (0.0, top)];
            let bs = betas(-1.0, top, &breaks);
            // the curve is evaluated at beta = -1 as its limit from the right
            for &b in bs.iter().rev() {
                let inv = if b == -1.0 {
                    limit_at_minus_one(profile)
                } else {
                    profile.inv_p_tilde(b)?
                };
                pts.push((inv, b));
            }
            Ok(pts)
        }
        Region::Identification => {
            let bs = betas(-1.0, 0.0, &[-0.5]);
            let mut lower = Vec::new();
            let mut upper = Vec::new();
            for &b in &bs {
                let s = 2.0 * b + 1.0;
                lower.push((profile.inv_p_minus_s(s)?, b));
                upper.push((profile.p_plus_s(s)?.recip(), b));
            }
            let mut pts = upper;
            pts.extend(lower.into_iter().rev());
            Ok(pts)
        }
        Region::SourcePair => {
            // boundary q = p_flat(gamma) of the admissible source exponents
            let lo = -0.5;
            let hi = 1.0;
            let mut pts = Vec::new();
            for &g in &betas(lo, hi, &[]) {
                if g == lo {
                    let m = profile.p_minus_l.max(1.0);
                    pts.push((1.0 / m, g));
                } else {
                    pts.push((1.0 / profile.p_flat(g)?, g));
                }
            }
            Ok(pts)
        }
    }
}

/// `1 / p~_L(-1)`, the common limit `1 / q_+(L*)'` of every branch.
fn limit_at_minus_one(profile: &ExponentProfile) -> f64 {
    1.0 - profile.q_plus_lstar.recip()
}

/// Writes a polyline as CSV with header `inv_p,beta`.
pub fn polyline_csv<W: std::io::Write>(pts: &[(f64, f64)], w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["inv_p", "beta"])?;
    for (x, y) in pts {
        wr.write_record([x.to_string(), y.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lap1() -> ExponentProfile {
        ExponentProfile::laplacian(1)
    }

    #[test]
    fn conjugate_examples() {
        assert_eq!(holder_conjugate(Ext::Finite(2.0)).unwrap(), Ext::Finite(2.0));
        assert_eq!(holder_conjugate(Ext::Finite(1.0)).unwrap(), Ext::Inf);
        assert_eq!(holder_conjugate(Ext::Inf).unwrap(), Ext::Finite(1.0));
        let c = holder_conjugate(Ext::Finite(4.0 / 3.0)).unwrap().finite().unwrap();
        assert!((c - 4.0).abs() < 1e-12);
        assert!(holder_conjugate(Ext::Finite(0.5)).is_err());
    }

    #[test]
    fn p_minus_s_laplacian_examples() {
        let p = lap1();
        assert!((p.p_minus_s(0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((p.p_minus_s(1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.p_minus_s(-1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(p.p_minus_s(1.5).is_err());
    }

    #[test]
    fn p_plus_examples() {
        let p = lap1();
        for s in [-1.0, -0.3, 0.0, 0.7, 1.0] {
            assert_eq!(p.p_plus_s(s).unwrap(), Ext::Inf);
        }
        let g = ExponentProfile::new(2, 0.8, Ext::Finite(5.0), 0.7, Ext::Finite(3.0)).unwrap();
        let q = g.p_plus_s(1.0).unwrap().finite().unwrap();
        assert!((q - 5.0).abs() < 1e-12);
        let h = ExponentProfile::new_unchecked(1, 0.5, Ext::Inf, 0.5, Ext::Inf);
        assert_eq!(h.p_plus_s(0.0).unwrap(), Ext::Inf);
    }

    #[test]
    fn beta_l_examples() {
        assert!((lap1().beta_l() + 1.0).abs() < 1e-15);
        let one = ExponentProfile::new_unchecked(3, 1.0, Ext::Inf, 1.0, Ext::Inf);
        assert!((one.beta_l() + 0.5).abs() < 1e-15);
        // p_- = 1/2 in dimension 2 is below n/(n+1) and rejected
        assert!(ExponentProfile::new(2, 0.5, Ext::Inf, 0.5, Ext::Inf).is_err());
        let raw = ExponentProfile::new_unchecked(2, 0.5, Ext::Inf, 0.5, Ext::Inf);
        assert!((raw.beta_l() + 1.5).abs() < 1e-15);
    }

    #[test]
    fn p_l_beta_examples() {
        assert!((lap1().p_l_beta(-0.5).unwrap() - 0.5).abs() < 1e-15);
        let g = ExponentProfile::new(2, 0.75, Ext::Finite(4.0), 0.7, Ext::Finite(6.0)).unwrap();
        assert!((g.p_l_beta(g.beta_l()).unwrap() - 1.0).abs() < 1e-12);
        let one = ExponentProfile::new_unchecked(1, 1.0, Ext::Inf, 1.0, Ext::Inf);
        assert!((one.p_l_beta(0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(lap1().p_l_beta(-1.0).is_err());
    }

    #[test]
    fn p_tilde_examples() {
        // n/(n + 2 beta + 2) at n = 1, beta = -3/4 is 1/(3/2)
        assert!((lap1().p_tilde(-0.75).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let g = ExponentProfile::new(2, 0.75, Ext::Finite(4.0), 0.7, Ext::Finite(6.0)).unwrap();
        assert!((g.p_tilde(g.beta_l()).unwrap() - 1.0).abs() < 1e-12);
        let lim = g.p_tilde(-1.0 + 1e-13).unwrap();
        assert!((lim - 6.0 / 5.0).abs() < 1e-10, "{lim}");
    }

    #[test]
    fn p_flat_examples() {
        let a = ExponentProfile::new_unchecked(1, 0.5, Ext::Inf, 0.5, Ext::Inf);
        assert!((a.p_flat(0.0).unwrap() - 0.5).abs() < 1e-15);
        let b = ExponentProfile::new_unchecked(1, 1.5, Ext::Inf, 1.5, Ext::Inf);
        assert!((b.p_flat(0.0).unwrap() - 0.6).abs() < 1e-15);
        assert!((a.p_flat(-0.5 + 1e-12).unwrap() - 1.0).abs() < 1e-10);
        assert!(a.p_flat(-0.5).is_err());
    }

    #[test]
    fn membership_examples() {
        let p = lap1();
        let m = region_membership(
            &p,
            &SpaceParams::from_beta(-0.5, Ext::Finite(1.0), Variant::Tent),
            Region::WellposedHc,
        );
        assert!(m.member, "{}", m.reason);
        let m = region_membership(
            &p,
            &SpaceParams::from_beta(0.1, Ext::Finite(3.0), Variant::Tent),
            Region::WellposedHc,
        );
        assert!(!m.member);
        let sp = SpaceParams::from_beta(-0.3, Ext::Finite(1.7), Variant::Tent);
        assert!(source_pair_membership(&p, &sp, &sp).member);
        // p = inf is included, the lower edge is open
        let edge = p.p_tilde(-0.5).unwrap();
        let on = SpaceParams::from_beta(-0.5, Ext::Finite(edge), Variant::Tent);
        assert!(!region_membership(&p, &on, Region::WellposedHc).member);
        let top = SpaceParams::from_beta(-0.5, Ext::Inf, Variant::Tent);
        assert!(region_membership(&p, &top, Region::WellposedHc).member);
    }

    #[test]
    fn polyline_examples() {
        let p = lap1();
        let pts = region_boundary_polyline(&p, Region::WellposedHc, 5).unwrap();
        for &(x, b) in &pts[2..] {
            assert!((x - (1.0 + 2.0 * b + 2.0)).abs() < 1e-12, "{x} {b}");
        }
        let two = region_boundary_polyline(&p, Region::WellposedHc, 2).unwrap();
        assert_eq!(two.len(), 2 + 2 + 1); // p = inf edge plus endpoints and the -1/2 break
        let g = ExponentProfile::new(2, 0.75, Ext::Finite(4.0), 0.7, Ext::Finite(6.0)).unwrap();
        let pts = region_boundary_polyline(&g, Region::WellposedHc, 7).unwrap();
        let bl = g.beta_l();
        assert!(pts.iter().any(|&(x, b)| b == bl && (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn parses_infinity_and_fractions() {
        assert_eq!("inf".parse::<Ext>().unwrap(), Ext::Inf);
        assert_eq!("4/3".parse::<Ext>().unwrap(), Ext::Finite(4.0 / 3.0));
        let js = serde_json::to_string(&Ext::Inf).unwrap();
        assert_eq!(js, "\"inf\"");
        let back: Ext = serde_json::from_str(&js).unwrap();
        assert_eq!(back, Ext::Inf);
    }
}
