//! Registry of known solution families of `AB = δBA²`.
//!
//! Each family is data: free parameters, fixed parameters given as expressions
//! of earlier ones, non-vanishing constraints for random draws, and the side
//! identities it is expected to satisfy. Trigonometric families are checked on
//! the operators and on their reduced coefficient matrices.

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};
use std::sync::OnceLock;

use evalexpr::{eval_number_with_context, ContextWithMutableVariables, HashMapContext, Value};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::atoms::{sigma1, sigma2, FunctionAtom, Interval};
use crate::covariance::{check_covariance, region_residuals, regions, CovarianceReport, Method};
use crate::error::{Error, Result};
use crate::operator::{commutator, compose, power, KernelSum, Polynomial, SeparableOperator};
use crate::trig::{self, four_term_operator, Theta};

const REGISTRY_JSON: &str = include_str!("../assets/families.json");

pub const REGISTRY_VERSION: u32 = 1;

/// Name of the determinant check run by `reproduce`; it has no free parameters.
pub const DETV_CHECK_ID: &str = "case2a-detv-factorization";

/// Draws closer to zero than this are rejected for non-vanishing constraints.
const NONZERO_MARGIN: f64 = 0.05;
const MAX_DRAW_ATTEMPTS: usize = 1000;

const TRIG_PARAMS: [&str; 9] = ["thA1", "thA2", "thA3", "thA4", "thB1", "thB2", "thB3", "thB4", "delta"];
const LAURENT_PARAMS: [&str; 7] = ["gA0", "gA1", "gA2", "gA3", "gB1", "gB2", "delta"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    /// Four distinct frequency pairs sharing two resonant ones.
    Case1,
    /// One frequency with `sin ⊥ cos` on the domain.
    Case2,
    /// Zero frequency, so `σ₁ = 0`.
    Case2Sigma1Zero,
    /// `σ₂ = 0`, checked on the coefficient matrices only.
    Case2Sigma2Zero,
    /// Degenerate domain, both `σ` vanish.
    Case2Degenerate,
    Laurent,
    Projection,
}

impl Setting {
    pub fn params(self) -> &'static [&'static str] {
        match self {
            Setting::Laurent => &LAURENT_PARAMS,
            Setting::Projection => &["delta"],
            _ => &TRIG_PARAMS,
        }
    }

    fn is_trig(self) -> bool {
        !matches!(self, Setting::Laurent | Setting::Projection)
    }

    fn trig_geometry(self) -> (f64, Interval, Interval) {
        match self {
            Setting::Case1 => (0.0, Interval::of(0.0, 1.0), Interval::of(-0.5, 1.5)),
            Setting::Case2 | Setting::Case2Sigma2Zero => (PI, Interval::of(0.25, 0.75), Interval::of(0.0, 1.0)),
            Setting::Case2Sigma1Zero => (0.0, Interval::of(0.0, 1.0), Interval::of(-0.25, 1.25)),
            Setting::Case2Degenerate => (PI, Interval::of(0.5, 0.5), Interval::of(0.0, 1.0)),
            Setting::Laurent | Setting::Projection => unreachable!("not a trigonometric setting"),
        }
    }

    /// `(σ₁, σ₂)` as seen by the coefficient-matrix route.
    pub fn sigmas(self) -> (f64, f64) {
        match self {
            Setting::Case1 => (sigma1(6.0 * PI, 0.0, 1.0), sigma2(4.0 * PI, 0.0, 1.0)),
            Setting::Case2Sigma2Zero => {
                let (w, g, _) = self.trig_geometry();
                (sigma1(w, g.lo, g.hi), 0.0)
            }
            Setting::Laurent | Setting::Projection => (0.0, 0.0),
            _ => {
                let (w, g, _) = self.trig_geometry();
                (sigma1(w, g.lo, g.hi), sigma2(w, g.lo, g.hi))
            }
        }
    }

    /// Builds the `A`-shaped operator from 4 coefficients (Laurent: `γ₀..γ₃`).
    fn a_shaped(self, c: [f64; 4]) -> Result<Option<SeparableOperator>> {
        match self {
            Setting::Case1 => case1_operator(c).map(Some),
            Setting::Case2Sigma2Zero => Ok(None),
            Setting::Laurent => {
                let (left, right) = laurent_atoms();
                let coeff = DMatrix::from_row_slice(2, 2, &[c[0], c[1], c[2], c[3]]);
                SeparableOperator::new(left, coeff, right, laurent_domain(), laurent_support()).map(Some)
            }
            Setting::Projection => Err(Error::Argument("projection setting has no A-shaped builder".into())),
            _ => {
                let (w, g, x) = self.trig_geometry();
                four_term_operator(w, c, g, x).map(Some)
            }
        }
    }

    fn b_shaped(self, v: &BTreeMap<String, f64>) -> Result<Option<SeparableOperator>> {
        match self {
            Setting::Laurent => {
                let (left, right) = laurent_atoms();
                let coeff = DMatrix::from_row_slice(2, 2, &[0.0, v["gB1"], v["gB2"], 0.0]);
                SeparableOperator::new(left, coeff, right, laurent_domain(), laurent_support()).map(Some)
            }
            _ => self.a_shaped(theta(v, 'B')),
        }
    }
}

fn case1_operator(theta: Theta) -> Result<SeparableOperator> {
    let w = |k: f64| 2.0 * PI * k;
    let left = vec![
        FunctionAtom::sin(w(1.0)),
        FunctionAtom::cos(w(2.0)),
        FunctionAtom::sin(w(3.0)),
        FunctionAtom::cos(w(4.0)),
    ];
    let right = vec![
        FunctionAtom::cos(w(5.0)),
        FunctionAtom::cos(w(2.0)),
        FunctionAtom::sin(w(3.0)),
        FunctionAtom::sin(w(6.0)),
    ];
    let (_, g, x) = Setting::Case1.trig_geometry();
    SeparableOperator::from_diagonal(left, &theta, right, g, x)
}

fn laurent_domain() -> Interval {
    Interval::of(1.0, 2.0)
}

fn laurent_support() -> Interval {
    Interval::of(0.5, 3.0)
}

/// Rows `1, 1/t` on the support, columns `1, 1/s` on the domain.
fn laurent_atoms() -> (Vec<FunctionAtom>, Vec<FunctionAtom>) {
    let left = vec![
        FunctionAtom::constant(1.0).restricted(laurent_support()),
        FunctionAtom::laurent(1).restricted(laurent_support()),
    ];
    let right = vec![
        FunctionAtom::constant(1.0),
        FunctionAtom::laurent(1).restricted(laurent_domain()),
    ];
    (left, right)
}

fn projection_pair() -> Result<(SeparableOperator, SeparableOperator)> {
    let (g, x) = (Interval::of(0.0, 1.0), Interval::of(-0.25, 1.25));
    let right = vec![FunctionAtom::monomial(1), FunctionAtom::constant(1.0)];
    let coeff = DMatrix::from_row_slice(2, 2, &[4.0, -3.0, 3.0, -2.0]);
    let left = |sign: f64| vec![FunctionAtom::monomial(1).scaled(-6.0 * sign), FunctionAtom::monomial(2).scaled(12.0 * sign)];
    Ok((
        SeparableOperator::new(left(1.0), coeff.clone(), right.clone(), g, x)?,
        SeparableOperator::new(left(-1.0), coeff, right, g, x)?,
    ))
}

fn theta(v: &BTreeMap<String, f64>, side: char) -> Theta {
    std::array::from_fn(|i| v[&format!("th{side}{}", i + 1)])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Identity {
    AbZero,
    BaZero,
    Commute,
    #[serde(rename = "a2_eq_a")]
    A2EqA,
    AbEqMinusA,
    /// `AB − BA` equals the `A`-shaped operator with these coefficients.
    Commutator { expected: [String; 4] },
    /// `A` and `B` commute exactly when `expr` vanishes; each witness overrides
    /// free parameters to land on the commuting branch.
    CommuteIff { expr: String, witnesses: Vec<Vec<(String, String)>> },
}

impl Identity {
    pub fn name(&self) -> &'static str {
        match self {
            Identity::AbZero => "ab_zero",
            Identity::BaZero => "ba_zero",
            Identity::Commute => "commute",
            Identity::A2EqA => "a2_eq_a",
            Identity::AbEqMinusA => "ab_eq_minus_a",
            Identity::Commutator { .. } => "commutator",
            Identity::CommuteIff { .. } => "commute_iff",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Family {
    pub id: String,
    pub description: String,
    pub setting: Setting,
    pub free: Vec<String>,
    /// Evaluated in order; each may use free parameters and earlier entries.
    pub fixed: Vec<(String, String)>,
    pub nonzero: Vec<String>,
    pub identities: Vec<Identity>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Registry {
    version: u32,
    families: Vec<Family>,
}

fn parse_registry(text: &str) -> Result<Vec<Family>> {
    let reg: Registry = serde_json::from_str(text).map_err(|e| Error::Input(format!("family registry: {e}")))?;
    if reg.version != REGISTRY_VERSION {
        return Err(Error::Input(format!("family registry version {} unsupported", reg.version)));
    }
    let mut seen = std::collections::HashSet::new();
    for f in &reg.families {
        if !seen.insert(f.id.as_str()) {
            return Err(Error::Input(format!("duplicate family id {}", f.id)));
        }
        let known = f.setting.params();
        let fixed = f.fixed.iter().map(|(n, _)| n);
        if let Some(bad) = f.free.iter().chain(fixed).find(|n| !known.contains(&n.as_str())) {
            return Err(Error::Input(format!("family {}: unknown parameter {bad}", f.id)));
        }
    }
    Ok(reg.families)
}

/// The bundled families, sorted by id.
pub fn registry() -> &'static [Family] {
    static REG: OnceLock<Vec<Family>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut fams = parse_registry(REGISTRY_JSON).expect("bundled family registry is valid");
        fams.sort_by(|a, b| a.id.cmp(&b.id));
        fams
    })
}

pub fn find_family(id: &str) -> Result<&'static Family> {
    registry()
        .iter()
        .find(|f| f.id == id)
        .ok_or_else(|| Error::Argument(format!("unknown family id {id:?}")))
}

/// Sorted `(id, description)` pairs, including the determinant check.
pub fn list_families() -> Vec<(String, String)> {
    let mut out: Vec<_> = registry().iter().map(|f| (f.id.clone(), f.description.clone())).collect();
    out.push((
        DETV_CHECK_ID.to_string(),
        "factored det(V) for thA4 = 0 against the assembled 4x4 system, 100 samples".to_string(),
    ));
    out.sort();
    out
}

struct Expr<'a> {
    ctx: HashMapContext,
    family: &'a str,
}

impl<'a> Expr<'a> {
    fn new(family: &'a Family) -> Self {
        let mut e = Expr { ctx: HashMapContext::new(), family: &family.id };
        let (s1, s2) = family.setting.sigmas();
        for (k, v) in [("sigma1", s1), ("sigma2", s2), ("ln2", LN_2)] {
            e.set(k, v);
        }
        e
    }

    fn set(&mut self, name: &str, v: f64) {
        self.ctx
            .set_value(name.to_string(), Value::Float(v))
            .expect("hash map contexts accept variables");
    }

    fn eval(&self, expr: &str) -> Result<f64> {
        eval_number_with_context(expr, &self.ctx)
            .map_err(|e| Error::Input(format!("family {}: cannot evaluate {expr:?}: {e}", self.family)))
    }
}

impl Family {
    /// All setting parameters: free values, then fixed expressions, the rest zero.
    pub fn resolve(&self, free: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
        if let Some(extra) = free.keys().find(|k| !self.free.contains(k)) {
            return Err(Error::Argument(format!("{} is not a free parameter of {}", extra, self.id)));
        }
        let mut values: BTreeMap<String, f64> = self.setting.params().iter().map(|p| (p.to_string(), 0.0)).collect();
        let mut ex = Expr::new(self);
        for name in &self.free {
            let v = *free
                .get(name)
                .ok_or_else(|| Error::Argument(format!("missing free parameter {name} for {}", self.id)))?;
            values.insert(name.clone(), v);
        }
        for (k, v) in &values {
            ex.set(k, *v);
        }
        for (name, expr) in &self.fixed {
            let v = ex.eval(expr)?;
            values.insert(name.clone(), v);
            ex.set(name, v);
        }
        Ok(values)
    }

    fn context(&self, values: &BTreeMap<String, f64>) -> Expr<'_> {
        let mut ex = Expr::new(self);
        for (k, v) in values {
            ex.set(k, *v);
        }
        ex
    }

    /// Free values uniform in `±[0.25, 2]`, redrawn until every constraint is met.
    pub fn draw(&self, rng: &mut impl Rng) -> Result<BTreeMap<String, f64>> {
        for _ in 0..MAX_DRAW_ATTEMPTS {
            let free: BTreeMap<String, f64> = self
                .free
                .iter()
                .map(|n| {
                    let mag = rng.random_range(0.25..2.0);
                    (n.clone(), if rng.random_bool(0.5) { mag } else { -mag })
                })
                .collect();
            let values = self.resolve(&free)?;
            if !values.values().all(|v| v.is_finite()) {
                continue;
            }
            let ex = self.context(&values);
            let mut guards: Vec<&str> = self.nonzero.iter().map(String::as_str).collect();
            guards.extend(self.identities.iter().filter_map(|i| match i {
                Identity::CommuteIff { expr, .. } => Some(expr.as_str()),
                _ => None,
            }));
            let mut ok = true;
            for g in guards {
                if ex.eval(g)?.abs() < NONZERO_MARGIN {
                    ok = false;
                    break;
                }
            }
            if ok {
                return Ok(free);
            }
        }
        Err(Error::Numerical(format!("no admissible draw for {} after {MAX_DRAW_ATTEMPTS} attempts", self.id)))
    }

    fn operators(&self, v: &BTreeMap<String, f64>) -> Result<Option<(SeparableOperator, SeparableOperator)>> {
        match self.setting {
            Setting::Projection => projection_pair().map(Some),
            Setting::Laurent => {
                let a = self.setting.a_shaped([v["gA0"], v["gA1"], v["gA2"], v["gA3"]])?;
                let b = self.setting.b_shaped(v)?;
                Ok(a.zip(b))
            }
            s => Ok(s.a_shaped(theta(v, 'A'))?.zip(s.b_shaped(v)?)),
        }
    }

    fn matrices(&self, v: &BTreeMap<String, f64>) -> Option<Matrices> {
        if !self.setting.is_trig() {
            return None;
        }
        let (s1, s2) = self.setting.sigmas();
        Some(match self.setting {
            Setting::Case1 => {
                let mut w = DMatrix::zeros(4, 4);
                w[(1, 1)] = s2;
                w[(2, 2)] = s1;
                Matrices {
                    a: diag(theta(v, 'A')),
                    b: diag(theta(v, 'B')),
                    w,
                    shape: Box::new(diag),
                }
            }
            _ => Matrices {
                a: to_dyn(trig::coeff_matrix(&theta(v, 'A'))),
                b: to_dyn(trig::coeff_matrix(&theta(v, 'B'))),
                w: to_dyn(trig::pairing_matrix(s1, s2)),
                shape: Box::new(|c: [f64; 4]| to_dyn(trig::coeff_matrix(&c))),
            },
        })
    }
}

fn diag(c: [f64; 4]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&c))
}

fn to_dyn(m: nalgebra::Matrix2<f64>) -> DMatrix<f64> {
    DMatrix::from_iterator(2, 2, m.iter().copied())
}

/// Reduced representation: kernels are coefficient matrices, products go through `W`.
struct Matrices {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    w: DMatrix<f64>,
    shape: Box<dyn Fn([f64; 4]) -> DMatrix<f64>>,
}

impl Matrices {
    fn mul(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
        x * &self.w * y
    }

    /// `(residual, scale)` for `Σ sign·term`.
    fn combo(terms: &[(f64, DMatrix<f64>)]) -> (f64, f64) {
        let mut acc = DMatrix::zeros(terms[0].1.nrows(), terms[0].1.ncols());
        let mut scale = 0.0;
        for (sign, m) in terms {
            acc += m * *sign;
            scale += m.norm();
        }
        (acc.norm(), scale)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Operator,
    Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: String,
    pub route: Route,
    pub residual: f64,
    pub scale: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub family: String,
    pub params: BTreeMap<String, f64>,
    /// Operator-route report, or the matrix-route residual when the setting has no operators.
    pub report: CovarianceReport,
    pub checks: Vec<CheckOutcome>,
    pub holds: bool,
}

fn kernel_outcome(check: &str, k: &KernelSum, a: &SeparableOperator, b: &SeparableOperator, tol: f64) -> Result<CheckOutcome> {
    let scale = k.scale();
    let (norms, pointwise) = region_residuals(k, &regions(a, b), scale)?;
    let residual = norms.iter().map(|n| n * n).sum::<f64>().sqrt();
    Ok(CheckOutcome {
        check: check.to_string(),
        route: Route::Operator,
        residual,
        scale,
        holds: residual <= tol * (1.0 + scale) && pointwise.iter().all(|&p| p),
    })
}

fn matrix_outcome(check: &str, terms: &[(f64, DMatrix<f64>)], tol: f64) -> CheckOutcome {
    let (residual, scale) = Matrices::combo(terms);
    CheckOutcome { check: check.to_string(), route: Route::Matrix, residual, scale, holds: residual <= tol * (1.0 + scale) }
}

fn op_kernel(id: &Identity, a: &SeparableOperator, b: &SeparableOperator, expected: Option<SeparableOperator>) -> Result<KernelSum> {
    Ok(match id {
        Identity::AbZero => KernelSum::single(compose(a, b)?),
        Identity::BaZero => KernelSum::single(compose(b, a)?),
        Identity::Commute | Identity::CommuteIff { .. } => commutator(a, b)?,
        Identity::A2EqA => KernelSum::single(power(a, 2)?).minus(KernelSum::single(a.clone())),
        Identity::AbEqMinusA => {
            let mut k = KernelSum::single(compose(a, b)?);
            k.push(1.0, a.clone());
            k
        }
        Identity::Commutator { .. } => {
            let e = expected.ok_or_else(|| Error::Argument("commutator identity needs an expected operator".into()))?;
            commutator(a, b)?.minus(KernelSum::single(e))
        }
    })
}

fn matrix_terms(id: &Identity, m: &Matrices, expected: Option<DMatrix<f64>>) -> Vec<(f64, DMatrix<f64>)> {
    let (ab, ba) = (m.mul(&m.a, &m.b), m.mul(&m.b, &m.a));
    match id {
        Identity::AbZero => vec![(1.0, ab)],
        Identity::BaZero => vec![(1.0, ba)],
        Identity::Commute | Identity::CommuteIff { .. } => vec![(1.0, ab), (-1.0, ba)],
        Identity::A2EqA => vec![(1.0, m.mul(&m.a, &m.a)), (-1.0, m.a.clone())],
        Identity::AbEqMinusA => vec![(1.0, ab), (1.0, m.a.clone())],
        Identity::Commutator { .. } => {
            let e = expected.unwrap_or_else(|| DMatrix::zeros(ab.nrows(), ab.ncols()));
            vec![(1.0, ab), (-1.0, ba), (-1.0, e)]
        }
    }
}

/// Every route's covariance verdict and identity checks at one parameter point.
fn evaluate(fam: &Family, values: &BTreeMap<String, f64>, tol: f64) -> Result<(CovarianceReport, Vec<CheckOutcome>)> {
    let f = Polynomial::monomial(values["delta"], 2);
    let ops = fam.operators(values)?;
    let mats = fam.matrices(values);
    let ex = fam.context(values);
    let mut checks = Vec::new();
    let mut report = None;
    if let Some((a, b)) = &ops {
        report = Some(check_covariance(a, b, &f, tol)?);
    }
    if let Some(m) = &mats {
        let delta = values["delta"];
        let rhs = m.mul(&m.mul(&m.b, &m.a), &m.a);
        let c = matrix_outcome("covariance", &[(1.0, m.mul(&m.a, &m.b)), (-delta, rhs)], tol);
        if report.is_none() {
            let violated = if c.holds { [true; 3] } else { [false, true, true] };
            report = Some(CovarianceReport::from_parts([c.residual, 0.0, 0.0], violated, tol, c.scale, Method::General));
        }
        checks.push(c);
    }
    let report = report.ok_or_else(|| Error::Argument(format!("family {} has no checkable route", fam.id)))?;
    for id in &fam.identities {
        let expected = match id {
            Identity::Commutator { expected } => {
                let mut c = [0.0; 4];
                for (slot, e) in c.iter_mut().zip(expected) {
                    *slot = ex.eval(e)?;
                }
                Some(c)
            }
            _ => None,
        };
        if let Some((a, b)) = &ops {
            let e = match expected {
                Some(c) => fam.setting.a_shaped(c)?,
                None => None,
            };
            checks.push(kernel_outcome(id.name(), &op_kernel(id, a, b, e)?, a, b, tol)?);
        }
        if let Some(m) = &mats {
            checks.push(matrix_outcome(id.name(), &matrix_terms(id, m, expected.map(|c| (m.shape)(c))), tol));
        }
    }
    Ok((report, checks))
}

/// Instantiates a family at the given free parameters and checks the relation
/// plus every stated identity.
pub fn verify_family(id: &str, free: &BTreeMap<String, f64>, tol: f64) -> Result<VerifyOutcome> {
    let fam = find_family(id)?;
    let values = fam.resolve(free)?;
    let (report, mut checks) = evaluate(fam, &values, tol)?;
    for ident in &fam.identities {
        let Identity::CommuteIff { expr, witnesses } = ident else { continue };
        // at the draw the expression is nonzero, so the pair must not commute
        for c in checks.iter_mut().filter(|c| c.check == "commute_iff") {
            let vanishes = fam.context(&values).eval(expr)?.abs() <= tol;
            c.holds = c.holds == vanishes;
        }
        for (w, overrides) in witnesses.iter().enumerate() {
            let mut moved = free.clone();
            let ex = fam.context(&values);
            for (name, e) in overrides {
                if !fam.free.contains(name) {
                    return Err(Error::Input(format!("family {id}: witness overrides non-free {name}")));
                }
                moved.insert(name.clone(), ex.eval(e)?);
            }
            let wv = fam.resolve(&moved)?;
            let (wr, wc) = evaluate(fam, &wv, tol)?;
            let at = |c: &CheckOutcome| c.check == "commute_iff" || c.check == "covariance";
            for mut c in wc.into_iter().filter(at) {
                c.check = format!("{}_witness{}", c.check, w + 1);
                checks.push(c);
            }
            checks.push(CheckOutcome {
                check: format!("covariance_witness{}", w + 1),
                route: Route::Operator,
                residual: wr.max_residual(),
                scale: wr.scale,
                holds: wr.holds,
            });
        }
    }
    let holds = report.holds && checks.iter().all(|c| c.holds);
    Ok(VerifyOutcome { family: id.to_string(), params: values, report, checks, holds })
}

/// `n` seeded random draws of a family, each verified. A family without free
/// parameters is checked once.
pub fn verify_family_draws(id: &str, n: usize, seed: u64, tol: f64) -> Result<Vec<VerifyOutcome>> {
    let fam = find_family(id)?;
    let n = if fam.free.is_empty() { n.min(1) } else { n };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| verify_family(id, &fam.draw(&mut rng)?, tol)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetvSample {
    pub theta_a: Theta,
    pub delta: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub factored: f64,
    /// The truncated product, which drops `−θ₂σ₂` from one factor.
    pub truncated: f64,
    /// Determinant of the 4x4 system assembled entry by entry.
    pub explicit: f64,
    /// Determinant of the system assembled from the operators, up to row order.
    pub assembled: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetvOutcome {
    pub samples: Vec<DetvSample>,
    pub max_rel_explicit: f64,
    pub max_rel_assembled: f64,
    /// Informational; the truncated product is not expected to match.
    pub max_rel_truncated: f64,
    pub rel_tol: f64,
    pub holds: bool,
}

pub const DETV_REL_TOL: f64 = 1e-9;

/// Compares the factored determinant (valid for `θ_{A,4} = 0`) against both
/// assembled systems over `n` random points with every factor at least
/// [`NONZERO_MARGIN`] away from zero.
///
/// Domains are `[0.5 − h, 0.5 + h]` at `ω = π`, where `sin ⊥ cos` for every `h`.
pub fn detv_factorization_check(n: usize, seed: u64) -> Result<DetvOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let mag = rng.random_range(0.25..2.0);
        if rng.random_bool(0.5) { mag } else { -mag }
    };
    let support = Interval::of(0.0, 1.0);
    let mut samples = Vec::with_capacity(n);
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
    while samples.len() < n {
        let h = rng.random_range(0.05..0.45);
        let g = Interval::of(0.5 - h, 0.5 + h);
        let (s1, s2) = (sigma1(PI, g.lo, g.hi), sigma2(PI, g.lo, g.hi));
        let theta_a = [draw(&mut rng), draw(&mut rng), draw(&mut rng), 0.0];
        let delta = draw(&mut rng);
        let [_, a2, a3, _] = theta_a;
        let factors = [
            delta * a2 * a3 * s1 * s2,
            delta * a3 * a3 * s1 * s1 - a2 * s2,
            a2 * a2 * delta * s2 * s2 - a3 * s1,
            delta * a2 * s2 - 1.0,
            delta * a3 * s1 - 1.0,
        ];
        if factors.iter().any(|f| f.abs() < NONZERO_MARGIN) {
            continue;
        }
        let a = four_term_operator(PI, theta_a, g, support)?;
        let template = crate::solver::ParamOperator::diagonal(&a)?;
        let v = crate::solver::build_linear_system_for_b(&a, &Polynomial::monomial(delta, 2), &template)?;
        if v.nrows() != 4 || v.ncols() != 4 {
            return Err(Error::Numerical(format!("assembled system is {}x{}, expected 4x4", v.nrows(), v.ncols())));
        }
        samples.push(DetvSample {
            theta_a,
            delta,
            sigma1: s1,
            sigma2: s2,
            factored: trig::detv_factored_a4_zero(&theta_a, delta, s1, s2),
            truncated: trig::detv_factored_a4_zero_truncated(&theta_a, delta, s1, s2),
            explicit: trig::detv_trig(&theta_a, delta, s1, s2),
            assembled: v.determinant(),
        });
    }
    let max_rel_explicit = samples.iter().map(|s| rel(s.explicit, s.factored)).fold(0.0, f64::max);
    let max_rel_assembled = samples.iter().map(|s| rel(s.assembled.abs(), s.factored.abs())).fold(0.0, f64::max);
    let max_rel_truncated = samples.iter().map(|s| rel(s.explicit, s.truncated)).fold(0.0, f64::max);
    let holds = max_rel_explicit <= DETV_REL_TOL && max_rel_assembled <= DETV_REL_TOL;
    Ok(DetvOutcome { samples, max_rel_explicit, max_rel_assembled, max_rel_truncated, rel_tol: DETV_REL_TOL, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::DEFAULT_TOL;

    #[test]
    fn registry_parses_and_is_sorted() {
        let reg = registry();
        assert!(reg.len() > 50);
        assert!(reg.windows(2).all(|w| w[0].id < w[1].id));
        let ids: Vec<_> = list_families().into_iter().map(|(id, _)| id).collect();
        for i in 1..=9 {
            assert!(ids.contains(&format!("case1-item{i}")));
        }
        for i in 1..=8 {
            assert!(ids.contains(&format!("case2b-b3-2sigma-item{i}")));
        }
        assert!(ids.iter().any(|i| i == "laurent"));
        assert!(ids.iter().any(|i| i == DETV_CHECK_ID));
    }

    #[test]
    fn rejects_bad_registry() {
        let dup = r#"{"version":1,"families":[
            {"id":"x","description":"","setting":"case2","free":[],"fixed":[],"nonzero":[],"identities":[]},
            {"id":"x","description":"","setting":"case2","free":[],"fixed":[],"nonzero":[],"identities":[]}]}"#;
        assert!(matches!(parse_registry(dup), Err(Error::Input(_))));
        let unknown = r#"{"version":1,"families":[
            {"id":"x","description":"","setting":"laurent","free":["thA1"],"fixed":[],"nonzero":[],"identities":[]}]}"#;
        assert!(matches!(parse_registry(unknown), Err(Error::Input(_))));
        assert!(matches!(parse_registry(r#"{"version":2,"families":[]}"#), Err(Error::Input(_))));
    }

    #[test]
    fn fixed_expressions_resolve() {
        let fam = find_family("case1-item9").unwrap();
        let free: BTreeMap<_, _> = fam.free.iter().map(|n| (n.clone(), 0.5)).collect();
        let v = fam.resolve(&free).unwrap();
        assert!((v["thA2"] - 1.0 / (0.5 * 0.5)).abs() < 1e-12);
        assert!(fam.resolve(&BTreeMap::new()).is_err());
    }

    #[test]
    fn unknown_family_is_argument_error() {
        assert!(matches!(verify_family("nope", &BTreeMap::new(), DEFAULT_TOL), Err(Error::Argument(_))));
    }

    #[test]
    fn laurent_family_commutator() {
        let free = BTreeMap::from([("gA2".to_string(), 1.0), ("gB2".to_string(), 1.0), ("delta".to_string(), 1.0)]);
        let out = verify_family("laurent", &free, DEFAULT_TOL).unwrap();
        assert!(out.holds, "{out:#?}");
        assert!((out.params["gA3"] + 2.0 * LN_2).abs() < 1e-15);
    }

    #[test]
    fn detv_factorization_holds() {
        let out = detv_factorization_check(20, 5).unwrap();
        assert!(out.holds, "explicit {:.2e} assembled {:.2e}", out.max_rel_explicit, out.max_rel_assembled);
    }

    #[test]
    fn broken_family_is_detected() {
        // case1-item9 with the fixed relation for thA3 perturbed
        let fam = find_family("case1-item9").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let free = fam.draw(&mut rng).unwrap();
        let mut v = fam.resolve(&free).unwrap();
        *v.get_mut("thA3").unwrap() += 0.1;
        let (report, _) = evaluate(fam, &v, DEFAULT_TOL).unwrap();
        assert!(!report.holds);
    }
}
