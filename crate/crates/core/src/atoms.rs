//! Closed-form function atoms and the pairing `∫_G u v`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::rc::Rc;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this frequency difference a trig product is integrated as resonant.
pub const RESONANCE_EPS: f64 = 1e-12;

/// Maximum number of panel doublings before quadrature gives up.
pub const MAX_REFINEMENT_DEPTH: u32 = 12;

/// Closed bounded interval `[lo, hi]`. Degenerate intervals have measure zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntervalRepr")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IntervalRepr {
    lo: f64,
    hi: f64,
}

impl TryFrom<IntervalRepr> for Interval {
    type Error = Error;
    fn try_from(r: IntervalRepr) -> Result<Self> {
        Interval::new(r.lo, r.hi)
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Domain(format!("interval bounds must be finite, got [{lo}, {hi}]")));
        }
        if lo > hi {
            return Err(Error::Domain(format!("interval requires lo <= hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// Panics on invalid bounds; for literals in tests and fixed geometry.
    pub fn of(lo: f64, hi: f64) -> Self {
        Self::new(lo, hi).expect("valid interval")
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_degenerate(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.lo <= 0.0 && 0.0 <= self.hi
    }

    /// `other ⊆ self`.
    pub fn covers(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }

    /// `self \ other` as at most two pieces of positive length.
    pub fn minus(&self, other: &Interval) -> Vec<Interval> {
        let Some(common) = self.intersect(other) else {
            return if self.is_degenerate() { vec![] } else { vec![*self] };
        };
        [Interval { lo: self.lo, hi: common.lo }, Interval { lo: common.hi, hi: self.hi }]
            .into_iter()
            .filter(|p| !p.is_degenerate())
            .collect()
    }
}

/// Base function of an atom.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AtomKind {
    Constant,
    Sin(f64),
    Cos(f64),
    Monomial(u32),
    /// `t^(-k)` with `k >= 1`.
    Laurent(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Trig {
    Sin,
    Cos,
}

/// `scale · base(t) · 1_restriction(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AtomRepr", into = "AtomRepr")]
pub struct FunctionAtom {
    pub kind: AtomKind,
    pub scale: f64,
    pub restriction: Option<Interval>,
}

impl FunctionAtom {
    fn unit(kind: AtomKind) -> Self {
        Self { kind, scale: 1.0, restriction: None }
    }

    pub fn constant(scale: f64) -> Self {
        Self::unit(AtomKind::Constant).scaled(scale)
    }

    pub fn sin(omega: f64) -> Self {
        Self::unit(AtomKind::Sin(omega))
    }

    pub fn cos(omega: f64) -> Self {
        Self::unit(AtomKind::Cos(omega))
    }

    pub fn monomial(k: u32) -> Self {
        Self::unit(AtomKind::Monomial(k))
    }

    /// `t^(-k)`; needs a restriction excluding 0 before use.
    pub fn laurent(k: u32) -> Self {
        Self::unit(AtomKind::Laurent(k))
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.scale *= factor;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// Intersects the restriction with `iv`. An empty intersection leaves the zero function.
    pub fn restricted(mut self, iv: Interval) -> Self {
        let target = match self.restriction {
            Some(r) => r.intersect(&iv),
            None => Some(iv),
        };
        match target {
            Some(r) => self.restriction = Some(r),
            None => {
                self.scale = 0.0;
                self.restriction = Some(Interval { lo: iv.lo, hi: iv.lo });
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.scale.is_finite() {
            return Err(Error::Domain(format!("atom scale must be finite, got {}", self.scale)));
        }
        match self.kind {
            AtomKind::Sin(w) | AtomKind::Cos(w) if !w.is_finite() => {
                Err(Error::Domain(format!("frequency must be finite, got {w}")))
            }
            AtomKind::Laurent(0) => Err(Error::Domain("Laurent exponent must be >= 1".into())),
            AtomKind::Laurent(k) => match self.restriction {
                Some(r) if !r.contains_zero() => Ok(()),
                _ => Err(Error::Domain(format!(
                    "Laurent atom t^-{k} needs a restriction excluding 0"
                ))),
            },
            _ => Ok(()),
        }
    }

    fn base(&self, t: f64) -> f64 {
        match self.kind {
            AtomKind::Constant => 1.0,
            AtomKind::Sin(w) => (w * t).sin(),
            AtomKind::Cos(w) => (w * t).cos(),
            AtomKind::Monomial(k) => t.powi(k as i32),
            AtomKind::Laurent(k) => t.powi(-(k as i32)),
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::Domain(format!("evaluation point must be finite, got {t}")));
        }
        if matches!(self.kind, AtomKind::Laurent(_)) && t == 0.0 {
            return Err(Error::Domain("Laurent atom evaluated at 0".into()));
        }
        match self.restriction {
            Some(r) if !r.contains(t) => Ok(0.0),
            _ => Ok(self.scale * self.base(t)),
        }
    }

    fn power(&self) -> Option<i32> {
        match self.kind {
            AtomKind::Constant => Some(0),
            AtomKind::Monomial(k) => Some(k as i32),
            AtomKind::Laurent(k) => Some(-(k as i32)),
            _ => None,
        }
    }

    fn trig(&self) -> Option<(Trig, f64)> {
        match self.kind {
            AtomKind::Constant => Some((Trig::Cos, 0.0)),
            AtomKind::Sin(w) => Some((Trig::Sin, w)),
            AtomKind::Cos(w) => Some((Trig::Cos, w)),
            _ => None,
        }
    }

    /// Largest |value| on `on ∩ restriction`.
    pub fn sup_on(&self, on: Interval) -> f64 {
        let dom = match self.restriction {
            Some(r) => match r.intersect(&on) {
                Some(d) => d,
                None => return 0.0,
            },
            None => on,
        };
        let s = self.scale.abs();
        match self.kind {
            AtomKind::Constant | AtomKind::Sin(_) | AtomKind::Cos(_) => s,
            AtomKind::Monomial(k) => s * dom.lo.abs().max(dom.hi.abs()).powi(k as i32),
            AtomKind::Laurent(k) => s / dom.lo.abs().min(dom.hi.abs()).powi(k as i32),
        }
    }

    /// Unit-scale representative and the factor it was divided by, or `None`
    /// when the atom vanishes almost everywhere.
    pub fn canonical(&self) -> Option<(FunctionAtom, f64)> {
        if self.scale == 0.0 || self.restriction.is_some_and(|r| r.is_degenerate()) {
            return None;
        }
        let (kind, sign) = match self.kind {
            AtomKind::Sin(0.0) => return None,
            AtomKind::Sin(w) if w < 0.0 => (AtomKind::Sin(-w), -1.0),
            AtomKind::Cos(0.0) => (AtomKind::Constant, 1.0),
            AtomKind::Cos(w) if w < 0.0 => (AtomKind::Cos(-w), 1.0),
            AtomKind::Monomial(0) => (AtomKind::Constant, 1.0),
            k => (k, 1.0),
        };
        Some((FunctionAtom { kind, scale: 1.0, restriction: self.restriction }, sign * self.scale))
    }

    /// Hashable identity of the base function and restriction, ignoring scale.
    pub fn key(&self) -> AtomKey {
        let (tag, param) = match self.kind {
            AtomKind::Constant => (0u8, 0u64),
            AtomKind::Sin(w) => (1, w.to_bits()),
            AtomKind::Cos(w) => (2, w.to_bits()),
            AtomKind::Monomial(k) => (3, k as u64),
            AtomKind::Laurent(k) => (4, k as u64),
        };
        AtomKey { tag, param, restriction: self.restriction.map(|r| (r.lo.to_bits(), r.hi.to_bits())) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AtomKey {
    tag: u8,
    param: u64,
    restriction: Option<(u64, u64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindTag {
    Constant,
    Sin,
    Cos,
    Monomial,
    Laurent,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomRepr {
    kind: KindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exponent: Option<u32>,
    #[serde(default = "unit_scale")]
    scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    restriction: Option<Interval>,
}

fn unit_scale() -> f64 {
    1.0
}

impl TryFrom<AtomRepr> for FunctionAtom {
    type Error = Error;
    fn try_from(r: AtomRepr) -> Result<Self> {
        let need_omega = || r.omega.ok_or_else(|| Error::Input("trig atom needs \"omega\"".into()));
        let need_exp = || r.exponent.ok_or_else(|| Error::Input("power atom needs \"exponent\"".into()));
        let kind = match r.kind {
            KindTag::Constant => AtomKind::Constant,
            KindTag::Sin => AtomKind::Sin(need_omega()?),
            KindTag::Cos => AtomKind::Cos(need_omega()?),
            KindTag::Monomial => AtomKind::Monomial(need_exp()?),
            KindTag::Laurent => AtomKind::Laurent(need_exp()?),
        };
        let stray = match r.kind {
            KindTag::Constant => r.omega.is_some() || r.exponent.is_some(),
            KindTag::Sin | KindTag::Cos => r.exponent.is_some(),
            KindTag::Monomial | KindTag::Laurent => r.omega.is_some(),
        };
        if stray {
            return Err(Error::Input(format!("unexpected parameter for {:?} atom", r.kind)));
        }
        let atom = FunctionAtom { kind, scale: r.scale, restriction: r.restriction };
        atom.validate()?;
        Ok(atom)
    }
}

impl From<FunctionAtom> for AtomRepr {
    fn from(a: FunctionAtom) -> Self {
        let (kind, omega, exponent) = match a.kind {
            AtomKind::Constant => (KindTag::Constant, None, None),
            AtomKind::Sin(w) => (KindTag::Sin, Some(w), None),
            AtomKind::Cos(w) => (KindTag::Cos, Some(w), None),
            AtomKind::Monomial(k) => (KindTag::Monomial, None, Some(k)),
            AtomKind::Laurent(k) => (KindTag::Laurent, None, Some(k)),
        };
        AtomRepr { kind, omega, exponent, scale: a.scale, restriction: a.restriction }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMethod {
    ClosedFormFirst,
    QuadratureOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingConfig {
    pub method: PairingMethod,
    pub quad_nodes: usize,
    pub quad_tol: f64,
}

impl PairingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.quad_nodes < 2 {
            return Err(Error::Argument(format!("quad_nodes must be >= 2, got {}", self.quad_nodes)));
        }
        if !(self.quad_tol > 0.0) {
            return Err(Error::Argument(format!("quad_tol must be > 0, got {}", self.quad_tol)));
        }
        Ok(())
    }

    pub fn quadrature_only() -> Self {
        Self { method: PairingMethod::QuadratureOnly, ..Self::default() }
    }
}

/// Node count from `SEPKERN_QUAD_NODES`, read once.
fn env_nodes() -> usize {
    static NODES: OnceLock<usize> = OnceLock::new();
    *NODES.get_or_init(|| {
        std::env::var("SEPKERN_QUAD_NODES")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n >= 2)
            .unwrap_or(32)
    })
}

impl Default for PairingConfig {
    fn default() -> Self {
        Self { method: PairingMethod::ClosedFormFirst, quad_nodes: env_nodes(), quad_tol: 1e-12 }
    }
}

thread_local! {
    static RULES: RefCell<HashMap<usize, Rc<GaussLegendre>>> = RefCell::new(HashMap::new());
}

fn rule(nodes: usize) -> Rc<GaussLegendre> {
    RULES.with(|cache| {
        cache
            .borrow_mut()
            .entry(nodes)
            .or_insert_with(|| {
                let n = NonZeroUsize::new(nodes).expect("nodes >= 2 checked by validate");
                Rc::new(GaussLegendre::new(n))
            })
            .clone()
    })
}

fn composite(gl: &GaussLegendre, f: &mut impl FnMut(f64) -> f64, g: Interval, panels: usize) -> f64 {
    let h = g.len() / panels as f64;
    (0..panels)
        .map(|p| {
            let a = g.lo + h * p as f64;
            let b = if p + 1 == panels { g.hi } else { a + h };
            gl.integrate(a, b, &mut *f)
        })
        .sum()
}

/// Composite Gauss–Legendre estimate of `∫_g f`, doubling panels until two
/// successive estimates agree to `quad_tol·(1+|I|)`.
pub fn quadrature(mut f: impl FnMut(f64) -> f64, g: Interval, cfg: &PairingConfig) -> Result<f64> {
    cfg.validate()?;
    if g.is_degenerate() {
        return Ok(0.0);
    }
    let gl = rule(cfg.quad_nodes);
    let mut prev = composite(&gl, &mut f, g, 1);
    let mut last_change = f64::NAN;
    for depth in 1..=MAX_REFINEMENT_DEPTH {
        let cur = composite(&gl, &mut f, g, 1 << depth);
        if !cur.is_finite() {
            return Err(Error::Numerical(format!("non-finite quadrature estimate on [{}, {}]", g.lo, g.hi)));
        }
        last_change = (cur - prev).abs();
        if last_change <= cfg.quad_tol * (1.0 + cur.abs()) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Numerical(format!(
        "quadrature on [{}, {}] did not converge after {} doublings (last change {:.3e}, tol {:.1e})",
        g.lo, g.hi, MAX_REFINEMENT_DEPTH, last_change, cfg.quad_tol
    )))
}

/// `∫_g cos(ν s) ds`.
fn int_cos(nu: f64, g: Interval) -> f64 {
    if nu.abs() < RESONANCE_EPS {
        g.len()
    } else {
        2.0 * (0.5 * nu * (g.hi + g.lo)).cos() * (0.5 * nu * (g.hi - g.lo)).sin() / nu
    }
}

/// `∫_g sin(ν s) ds`.
fn int_sin(nu: f64, g: Interval) -> f64 {
    if nu.abs() < RESONANCE_EPS {
        0.0
    } else {
        2.0 * (0.5 * nu * (g.hi + g.lo)).sin() * (0.5 * nu * (g.hi - g.lo)).sin() / nu
    }
}

fn trig_product(a: (Trig, f64), b: (Trig, f64), g: Interval) -> f64 {
    // fixed operand order keeps the result bit-for-bit symmetric
    let rank = |t: &(Trig, f64)| (t.0 == Trig::Cos) as u8;
    let (a, b) = match rank(&a).cmp(&rank(&b)).then(a.1.total_cmp(&b.1)) {
        std::cmp::Ordering::Greater => (b, a),
        _ => (a, b),
    };
    let (diff, sum) = (a.1 - b.1, a.1 + b.1);
    match (a.0, b.0) {
        (Trig::Sin, Trig::Sin) => 0.5 * (int_cos(diff, g) - int_cos(sum, g)),
        (Trig::Cos, Trig::Cos) => 0.5 * (int_cos(diff, g) + int_cos(sum, g)),
        (Trig::Sin, Trig::Cos) => 0.5 * (int_sin(sum, g) + int_sin(diff, g)),
        (Trig::Cos, Trig::Sin) => unreachable!("operands are ordered sin before cos"),
    }
}

fn power_integral(p: i32, g: Interval) -> Result<f64> {
    if p < 0 && g.contains_zero() {
        return Err(Error::Domain(format!(
            "t^{p} is not integrable on [{}, {}] containing 0",
            g.lo, g.hi
        )));
    }
    Ok(if p == -1 {
        (g.hi / g.lo).ln()
    } else {
        let q = p + 1;
        (g.hi.powi(q) - g.lo.powi(q)) / q as f64
    })
}

fn effective_domain(u: &FunctionAtom, v: &FunctionAtom, g: Interval) -> Option<Interval> {
    [u.restriction, v.restriction]
        .into_iter()
        .flatten()
        .try_fold(g, |acc, r| acc.intersect(&r))
        .filter(|d| !d.is_degenerate())
}

/// `∫_{G ∩ restrictions} u v`.
pub fn pair(u: &FunctionAtom, v: &FunctionAtom, g: Interval, cfg: &PairingConfig) -> Result<f64> {
    let Some(dom) = effective_domain(u, v, g) else {
        return Ok(0.0);
    };
    if u.scale == 0.0 || v.scale == 0.0 {
        return Ok(0.0);
    }
    let laurent = |a: &FunctionAtom| matches!(a.kind, AtomKind::Laurent(_));
    if (laurent(u) || laurent(v)) && dom.contains_zero() {
        return Err(Error::Domain(format!(
            "Laurent integrand over [{}, {}] containing 0",
            dom.lo, dom.hi
        )));
    }
    let scale = u.scale * v.scale;
    if cfg.method == PairingMethod::ClosedFormFirst {
        if let (Some(a), Some(b)) = (u.trig(), v.trig()) {
            return Ok(scale * trig_product(a, b, dom));
        }
        if let (Some(p), Some(q)) = (u.power(), v.power()) {
            return Ok(scale * power_integral(p + q, dom)?);
        }
    }
    let integral = quadrature(|t| u.base(t) * v.base(t), dom, cfg)?;
    Ok(scale * integral)
}

/// Pairing of two atom lists, extended by bilinearity.
pub fn pair_lists(us: &[FunctionAtom], vs: &[FunctionAtom], g: Interval, cfg: &PairingConfig) -> Result<f64> {
    let mut total = 0.0;
    for u in us {
        for v in vs {
            total += pair(u, v, g, cfg)?;
        }
    }
    Ok(total)
}

/// `∫_{α1}^{β1} sin²(ω s) ds`, adjusted by one rounding so that
/// `sigma1 + sigma2 == β1 − α1` holds exactly in floating point.
pub fn sigma1(omega: f64, alpha1: f64, beta1: f64) -> f64 {
    let len = beta1 - alpha1;
    if omega == 0.0 || len <= 0.0 {
        return 0.0;
    }
    let raw = 0.5 * len - (omega * (alpha1 + beta1)).cos() * (omega * len).sin() / (2.0 * omega);
    let raw = raw.clamp(0.0, len);
    if raw < 0.5 * len {
        len - (len - raw)
    } else {
        raw
    }
}

/// `∫_{α1}^{β1} cos²(ω s) ds = (β1 − α1) − sigma1`.
pub fn sigma2(omega: f64, alpha1: f64, beta1: f64) -> f64 {
    (beta1 - alpha1) - sigma1(omega, alpha1, beta1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{LN_2, PI};

    fn cfg() -> PairingConfig {
        PairingConfig::default()
    }

    #[test]
    fn eval_examples() {
        let c = FunctionAtom::constant(1.0).restricted(Interval::of(0.0, 1.0));
        assert_eq!(c.eval(0.5).unwrap(), 1.0);
        let m = FunctionAtom::monomial(1).scaled(-6.0).restricted(Interval::of(-0.5, 1.5));
        assert_eq!(m.eval(1.0).unwrap(), -6.0);
        assert_eq!(m.eval(2.0).unwrap(), 0.0);
        let l = FunctionAtom::laurent(1).restricted(Interval::of(1.0, 2.0));
        assert_eq!(l.eval(2.0).unwrap(), 0.5);
        assert!(matches!(l.eval(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn laurent_without_restriction_is_rejected() {
        assert!(FunctionAtom::laurent(2).validate().is_err());
        assert!(FunctionAtom::laurent(2).restricted(Interval::of(-1.0, 1.0)).validate().is_err());
        assert!(FunctionAtom::laurent(2).restricted(Interval::of(-2.0, -1.0)).validate().is_ok());
    }

    #[test]
    fn projection_pairings() {
        let g = Interval::of(0.0, 1.0);
        let a1 = FunctionAtom::monomial(1).scaled(-6.0);
        let a2 = FunctionAtom::monomial(2).scaled(12.0);
        let e1 = [FunctionAtom::monomial(1).scaled(4.0), FunctionAtom::constant(-3.0)];
        assert_relative_eq!(pair_lists(&e1, &[a1], g, &cfg()).unwrap(), 1.0, epsilon = 1e-14);
        assert!(pair_lists(&e1, &[a2], g, &cfg()).unwrap().abs() < 1e-14);
    }

    #[test]
    fn laurent_against_constant() {
        let g = Interval::of(1.0, 2.0);
        let l = FunctionAtom::laurent(1).restricted(g);
        assert_eq!(pair(&l, &FunctionAtom::constant(1.0), g, &cfg()).unwrap(), LN_2);
    }

    #[test]
    fn laurent_over_zero_is_domain_error() {
        let g = Interval::of(-1.0, 1.0);
        let m = FunctionAtom::monomial(0);
        assert!(matches!(power_integral(-2, g), Err(Error::Domain(_))));
        assert_eq!(pair(&m, &m, g, &cfg()).unwrap(), 2.0);
    }

    #[test]
    fn sin_cos_orthogonal_on_half_periods() {
        for (w, lo, hi) in [(PI, 0.0, 1.0), (PI, 0.25, 0.75), (2.0 * PI, 0.1, 1.6)] {
            let q = pair(&FunctionAtom::sin(w), &FunctionAtom::cos(w), Interval::of(lo, hi), &cfg()).unwrap();
            assert!(q.abs() < 1e-15, "{q}");
        }
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma1(0.0, 0.0, 1.0), 0.0);
        assert_eq!(sigma2(0.0, 0.0, 1.0), 1.0);
        assert_relative_eq!(sigma1(PI, 0.0, 1.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(sigma1(2.0 * PI, 0.0, 1.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(sigma2(PI, 0.0, 1.0), 0.5, epsilon = 1e-15);
        assert_eq!(sigma2(3.0, 0.4, 0.4), 0.0);
        let quad = quadrature(|s| (PI * s).sin().powi(2), Interval::of(0.0, 1.0), &cfg()).unwrap();
        assert_relative_eq!(quad, 0.5, epsilon = 1e-13);
    }

    #[test]
    fn sigma_matches_pairing() {
        let g = Interval::of(0.3, 1.9);
        let s = FunctionAtom::sin(2.7);
        assert_relative_eq!(pair(&s, &s, g, &cfg()).unwrap(), sigma1(2.7, 0.3, 1.9), epsilon = 1e-14);
    }

    #[test]
    fn quadrature_examples() {
        let c = cfg();
        assert_relative_eq!(quadrature(|s| s, Interval::of(0.0, 1.0), &c).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(quadrature(|s| 1.0 / s, Interval::of(1.0, 2.0), &c).unwrap(), LN_2, epsilon = 1e-14);
    }

    #[test]
    fn quadrature_reports_non_convergence() {
        let c = PairingConfig { quad_nodes: 2, quad_tol: 1e-300, ..cfg() };
        let err = quadrature(|s| (40.0 * s).sin().exp(), Interval::of(0.0, 1.0), &c).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    #[test]
    fn interval_difference() {
        let a = Interval::of(0.0, 3.0);
        assert_eq!(a.minus(&Interval::of(1.0, 2.0)), vec![Interval::of(0.0, 1.0), Interval::of(2.0, 3.0)]);
        assert!(a.minus(&Interval::of(-1.0, 4.0)).is_empty());
        assert_eq!(a.minus(&Interval::of(5.0, 6.0)), vec![a]);
    }

    #[test]
    fn canonical_forms() {
        assert!(FunctionAtom::sin(0.0).canonical().is_none());
        let (c, f) = FunctionAtom::cos(0.0).scaled(2.0).canonical().unwrap();
        assert_eq!((c.kind, f), (AtomKind::Constant, 2.0));
        let (s, f) = FunctionAtom::sin(-1.5).scaled(3.0).canonical().unwrap();
        assert_eq!((s.kind, f), (AtomKind::Sin(1.5), -3.0));
    }

    #[test]
    fn atom_json_round_trip() {
        let a = FunctionAtom::laurent(2).scaled(0.1 + 0.2).restricted(Interval::of(1.0 / 3.0, 2.0));
        let s = serde_json::to_string(&a).unwrap();
        let b: FunctionAtom = serde_json::from_str(&s).unwrap();
        assert_eq!(a, b);
        assert!(serde_json::from_str::<FunctionAtom>(r#"{"kind":"sin","scale":1}"#).is_err());
        assert!(serde_json::from_str::<FunctionAtom>(r#"{"kind":"constant","bogus":1}"#).is_err());
        assert!(serde_json::from_str::<FunctionAtom>(r#"{"kind":"laurent","exponent":1}"#).is_err());
    }
}
