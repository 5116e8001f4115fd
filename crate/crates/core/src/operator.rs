//! Separable-kernel integral operators and their algebra.
//!
//! An operator is `(Ax)(t) = ∫_domain Σ_ij C_ij l_i(t) r_j(s) x(s) ds` where the
//! left atoms are additionally cut to `left_support`. All products reduce to
//! Gram matrices of pairings, so composition is matrix multiplication.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::atoms::{pair, AtomKey, FunctionAtom, Interval, PairingConfig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperatorRepr", into = "OperatorRepr")]
pub struct SeparableOperator {
    pub left: Vec<FunctionAtom>,
    pub coeff: DMatrix<f64>,
    pub right: Vec<FunctionAtom>,
    pub domain: Interval,
    pub left_support: Interval,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorRepr {
    left: Vec<FunctionAtom>,
    coeff: Vec<Vec<f64>>,
    right: Vec<FunctionAtom>,
    domain: Interval,
    left_support: Interval,
}

impl TryFrom<OperatorRepr> for SeparableOperator {
    type Error = Error;
    fn try_from(r: OperatorRepr) -> Result<Self> {
        let coeff = matrix_from_rows(&r.coeff, r.left.len(), r.right.len())?;
        SeparableOperator::new(r.left, coeff, r.right, r.domain, r.left_support)
    }
}

impl From<SeparableOperator> for OperatorRepr {
    fn from(op: SeparableOperator) -> Self {
        OperatorRepr {
            coeff: matrix_rows(&op.coeff),
            left: op.left,
            right: op.right,
            domain: op.domain,
            left_support: op.left_support,
        }
    }
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Input(format!("coeff must be {nrows}x{ncols} to match the atom lists")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl SeparableOperator {
    pub fn new(
        left: Vec<FunctionAtom>,
        coeff: DMatrix<f64>,
        right: Vec<FunctionAtom>,
        domain: Interval,
        left_support: Interval,
    ) -> Result<Self> {
        if left.is_empty() || right.is_empty() {
            return Err(Error::Argument("operator needs at least one left and one right atom".into()));
        }
        if coeff.shape() != (left.len(), right.len()) {
            return Err(Error::Argument(format!(
                "coeff is {:?} but atoms give {}x{}",
                coeff.shape(),
                left.len(),
                right.len()
            )));
        }
        if coeff.iter().any(|c| !c.is_finite()) {
            return Err(Error::Argument("coeff entries must be finite".into()));
        }
        for a in left.iter().chain(&right) {
            a.validate()?;
        }
        Ok(Self { left, coeff, right, domain, left_support })
    }

    /// Kernel `Σ_i d_i l_i(t) r_i(s)`.
    pub fn from_diagonal(
        left: Vec<FunctionAtom>,
        diag: &[f64],
        right: Vec<FunctionAtom>,
        domain: Interval,
        left_support: Interval,
    ) -> Result<Self> {
        let coeff = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag));
        Self::new(left, coeff, right, domain, left_support)
    }

    pub fn rank_left(&self) -> usize {
        self.left.len()
    }

    pub fn rank_right(&self) -> usize {
        self.right.len()
    }

    /// Left atoms with the support indicator folded into their restriction.
    pub fn left_effective(&self) -> Vec<FunctionAtom> {
        self.left.iter().map(|a| a.restricted(self.left_support)).collect()
    }

    pub fn with_coeff(&self, coeff: DMatrix<f64>) -> Self {
        Self { coeff, ..self.clone() }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.with_coeff(&self.coeff * factor)
    }

    /// `‖C‖_F · max sup|l_i| · max sup|r_j|`.
    pub fn scale(&self) -> f64 {
        let sup_l = self.left.iter().map(|a| a.sup_on(self.left_support)).fold(0.0, f64::max);
        let sup_r = self.right.iter().map(|a| a.sup_on(self.domain)).fold(0.0, f64::max);
        self.coeff.norm() * sup_l * sup_r
    }

    pub fn kernel(&self, t: f64, s: f64) -> Result<f64> {
        if !self.domain.contains(s) || !self.left_support.contains(t) {
            return Ok(0.0);
        }
        let l = self.left.iter().map(|a| a.eval(t)).collect::<Result<Vec<_>>>()?;
        let r = self.right.iter().map(|a| a.eval(s)).collect::<Result<Vec<_>>>()?;
        let mut acc = 0.0;
        for (i, li) in l.iter().enumerate() {
            for (j, rj) in r.iter().enumerate() {
                acc += self.coeff[(i, j)] * li * rj;
            }
        }
        Ok(acc)
    }
}

/// `M[i][j] = ∫_G X_i Y_j`.
pub fn gram_cross(xs: &[FunctionAtom], ys: &[FunctionAtom], g: Interval) -> Result<DMatrix<f64>> {
    gram_cross_with(xs, ys, g, &PairingConfig::default())
}

pub fn gram_cross_with(
    xs: &[FunctionAtom],
    ys: &[FunctionAtom],
    g: Interval,
    cfg: &PairingConfig,
) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(xs.len(), ys.len());
    for (i, x) in xs.iter().enumerate() {
        for (j, y) in ys.iter().enumerate() {
            m[(i, j)] = pair(x, y, g, cfg)?;
        }
    }
    Ok(m)
}

/// Gram matrix of the inner pairing `A.right` against `B`'s effective left atoms over `A.domain`.
fn inner_gram(a: &SeparableOperator, b: &SeparableOperator) -> Result<DMatrix<f64>> {
    gram_cross(&a.right, &b.left_effective(), a.domain)
}

pub fn compose(a: &SeparableOperator, b: &SeparableOperator) -> Result<SeparableOperator> {
    let w = inner_gram(a, b)?;
    Ok(SeparableOperator {
        left: a.left.clone(),
        coeff: &a.coeff * w * &b.coeff,
        right: b.right.clone(),
        domain: b.domain,
        left_support: a.left_support,
    })
}

/// `A^m` with coefficient `C (M C)^(m-1)`.
pub fn power(a: &SeparableOperator, m: u32) -> Result<SeparableOperator> {
    if m == 0 {
        return Err(Error::Argument("power requires m >= 1".into()));
    }
    let t = inner_gram(a, a)? * &a.coeff;
    let mut acc = a.coeff.clone();
    for _ in 1..m {
        acc *= &t;
    }
    Ok(a.with_coeff(acc))
}

/// `F(z) = Σ δ_j z^j`, trailing zero coefficients trimmed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Polynomial {
    type Error = Error;
    fn try_from(coeffs: Vec<f64>) -> Result<Self> {
        Polynomial::new(coeffs)
    }
}

impl From<Polynomial> for Vec<f64> {
    fn from(p: Polynomial) -> Self {
        p.coeffs
    }
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Argument("polynomial coefficients must be finite".into()));
        }
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Ok(Self { coeffs })
    }

    /// `δ z^d`.
    pub fn monomial(delta: f64, d: usize) -> Self {
        let mut c = vec![0.0; d + 1];
        c[d] = delta;
        Self::new(c).expect("finite coefficient")
    }

    /// `F(z) = z`.
    pub fn identity() -> Self {
        Self::monomial(1.0, 1)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn constant_term(&self) -> f64 {
        self.coeffs[0]
    }

    /// Coefficient of the highest nonzero power, or 0 for the zero polynomial.
    pub fn leading(&self) -> f64 {
        *self.coeffs.last().expect("at least one coefficient")
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * z + c)
    }
}

/// `scalar·I + sep`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineOperator {
    pub scalar: f64,
    pub sep: SeparableOperator,
}

pub fn poly_eval(f: &Polynomial, a: &SeparableOperator) -> Result<AffineOperator> {
    let c = f.coeffs();
    let n = f.degree();
    let r = a.rank_right();
    if n == 0 {
        return Ok(AffineOperator { scalar: c[0], sep: a.with_coeff(DMatrix::zeros(a.rank_left(), r)) });
    }
    // H = δ_1 + δ_2 T + ... + δ_n T^(n-1) by Horner, then sep = C H
    let t = inner_gram(a, a)? * &a.coeff;
    let id = DMatrix::<f64>::identity(r, r);
    let mut h = &id * c[n];
    for j in (1..n).rev() {
        h = h * &t + &id * c[j];
    }
    Ok(AffineOperator { scalar: c[0], sep: a.with_coeff(&a.coeff * h) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTerm {
    pub sign: f64,
    pub op: SeparableOperator,
}

/// Signed sum of separable kernels, each living on its own s-domain.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelSum {
    pub terms: Vec<KernelTerm>,
}

impl KernelSum {
    pub fn single(op: SeparableOperator) -> Self {
        Self { terms: vec![KernelTerm { sign: 1.0, op }] }
    }

    pub fn push(&mut self, sign: f64, op: SeparableOperator) {
        self.terms.push(KernelTerm { sign, op });
    }

    pub fn minus(mut self, other: KernelSum) -> Self {
        self.terms.extend(other.terms.into_iter().map(|t| KernelTerm { sign: -t.sign, ..t }));
        self
    }

    pub fn scale(&self) -> f64 {
        self.terms.iter().map(|t| t.op.scale()).sum()
    }

    pub fn kernel(&self, t: f64, s: f64) -> Result<f64> {
        let mut acc = 0.0;
        for term in &self.terms {
            acc += term.sign * term.op.kernel(t, s)?;
        }
        Ok(acc)
    }
}

pub fn compose_affine(b: &SeparableOperator, fa: &AffineOperator) -> Result<KernelSum> {
    let mut k = KernelSum::single(b.scaled(fa.scalar));
    k.push(1.0, compose(b, &fa.sep)?);
    Ok(k)
}

/// `AB − BA`.
pub fn commutator(a: &SeparableOperator, b: &SeparableOperator) -> Result<KernelSum> {
    let mut k = KernelSum::single(compose(a, b)?);
    k.push(-1.0, compose(b, a)?);
    Ok(k)
}

/// `AB − B·F(A)`.
pub fn covariance_residual(a: &SeparableOperator, b: &SeparableOperator, f: &Polynomial) -> Result<KernelSum> {
    let ab = KernelSum::single(compose(a, b)?);
    Ok(ab.minus(compose_affine(b, &poly_eval(f, a)?)?))
}

/// `‖K‖²` on `t_region × s_region` by expanding every term against every other.
pub fn kernel_l2_norm_sq(k: &KernelSum, t_region: Interval, s_region: Interval) -> Result<f64> {
    let lefts: Vec<_> = k.terms.iter().map(|t| t.op.left_effective()).collect();
    let mut total = 0.0;
    for (p, tp) in k.terms.iter().enumerate() {
        for (q, tq) in k.terms.iter().enumerate() {
            let Some(s) = s_region.intersect(&tp.op.domain).and_then(|s| s.intersect(&tq.op.domain)) else {
                continue;
            };
            let gt = gram_cross(&lefts[p], &lefts[q], t_region)?;
            let gs = gram_cross(&tp.op.right, &tq.op.right, s)?;
            let inner = gt * &tq.op.coeff * gs.transpose();
            total += tp.sign * tq.sign * tp.op.coeff.component_mul(&inner).sum();
        }
    }
    Ok(total)
}

/// A kernel sum rewritten over distinct unit atoms: `Σ_ij C_ij l_i(t) r_j(s)`.
///
/// Atoms equal up to scale share one basis element, so exactly cancelling
/// terms cancel in the coefficients before any quadratic form is taken.
#[derive(Clone, Debug, PartialEq)]
pub struct MergedKernel {
    pub left: Vec<FunctionAtom>,
    pub right: Vec<FunctionAtom>,
    pub coeff: DMatrix<f64>,
}

#[derive(Default)]
struct Basis {
    atoms: Vec<FunctionAtom>,
    index: HashMap<AtomKey, usize>,
}

impl Basis {
    fn insert(&mut self, atom: &FunctionAtom) -> Option<(usize, f64)> {
        let (unit, factor) = atom.canonical()?;
        let next = self.atoms.len();
        let idx = *self.index.entry(unit.key()).or_insert(next);
        if idx == next {
            self.atoms.push(unit);
        }
        Some((idx, factor))
    }
}

impl MergedKernel {
    /// Restricts left atoms to `t_region` and right atoms to `domain ∩ s_region`.
    /// Terms whose domain misses `s_region` drop out. Atoms enter the basis
    /// even when their coefficients vanish, so the basis depends only on the atoms.
    pub fn build(k: &KernelSum, t_region: Interval, s_region: Interval) -> Self {
        let mut lb = Basis::default();
        let mut rb = Basis::default();
        let mut entries = Vec::new();
        for term in &k.terms {
            let Some(s) = term.op.domain.intersect(&s_region).filter(|s| !s.is_degenerate()) else {
                continue;
            };
            let li: Vec<_> = term
                .op
                .left_effective()
                .iter()
                .map(|a| lb.insert(&a.restricted(t_region)))
                .collect();
            let ri: Vec<_> = term.op.right.iter().map(|a| rb.insert(&a.restricted(s))).collect();
            for (i, l) in li.iter().enumerate() {
                for (j, r) in ri.iter().enumerate() {
                    if let (Some((a, fa)), Some((b, fb))) = (l, r) {
                        entries.push((*a, *b, term.sign * term.op.coeff[(i, j)] * fa * fb));
                    }
                }
            }
        }
        let mut coeff = DMatrix::zeros(lb.atoms.len(), rb.atoms.len());
        for (i, j, v) in entries {
            coeff[(i, j)] += v;
        }
        Self { left: lb.atoms, right: rb.atoms, coeff }
    }

    pub fn grams(&self, t_region: Interval, s_region: Interval) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        Ok((
            gram_cross(&self.left, &self.left, t_region)?,
            gram_cross(&self.right, &self.right, s_region)?,
        ))
    }

    /// `tr(Cᵀ G_t C G_s)`.
    pub fn l2_norm_sq(&self, t_region: Interval, s_region: Interval) -> Result<f64> {
        if self.coeff.is_empty() {
            return Ok(0.0);
        }
        let (gt, gs) = self.grams(t_region, s_region)?;
        Ok((self.coeff.transpose() * gt * &self.coeff * gs).trace())
    }
}

/// Same quantity as [`kernel_l2_norm_sq`], computed on the merged basis.
pub fn merged_l2_norm_sq(k: &KernelSum, t_region: Interval, s_region: Interval) -> Result<f64> {
    MergedKernel::build(k, t_region, s_region).l2_norm_sq(t_region, s_region)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn unit() -> Interval {
        Interval::of(0.0, 1.0)
    }

    pub(crate) fn projection_pair() -> (SeparableOperator, SeparableOperator) {
        let support = Interval::of(-0.25, 1.25);
        let right = vec![FunctionAtom::monomial(1), FunctionAtom::constant(1.0)];
        let coeff = DMatrix::from_row_slice(2, 2, &[4.0, -3.0, 3.0, -2.0]);
        let a_left = vec![FunctionAtom::monomial(1).scaled(-6.0), FunctionAtom::monomial(2).scaled(12.0)];
        let b_left = vec![FunctionAtom::monomial(1).scaled(6.0), FunctionAtom::monomial(2).scaled(-12.0)];
        let a = SeparableOperator::new(a_left, coeff.clone(), right.clone(), unit(), support).unwrap();
        let b = SeparableOperator::new(b_left, coeff, right, unit(), support).unwrap();
        (a, b)
    }

    fn dist_sq(x: &SeparableOperator, y: &SeparableOperator) -> f64 {
        let k = KernelSum::single(x.clone()).minus(KernelSum::single(y.clone()));
        merged_l2_norm_sq(&k, x.left_support.hull(&y.left_support), x.domain.hull(&y.domain)).unwrap()
    }

    #[test]
    fn projection_gram_is_identity() {
        let (a, _) = projection_pair();
        let c: Vec<Vec<FunctionAtom>> = vec![
            vec![FunctionAtom::monomial(1).scaled(4.0), FunctionAtom::constant(-3.0)],
            vec![FunctionAtom::monomial(1).scaled(3.0), FunctionAtom::constant(-2.0)],
        ];
        let cfg = PairingConfig::default();
        for (i, ci) in c.iter().enumerate() {
            for (j, aj) in a.left_effective().iter().enumerate() {
                let q = crate::atoms::pair_lists(ci, std::slice::from_ref(aj), unit(), &cfg).unwrap();
                assert!((q - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_identities() {
        let (a, b) = projection_pair();
        assert!(dist_sq(&power(&a, 2).unwrap(), &a) < 1e-20);
        assert!(dist_sq(&compose(&a, &b).unwrap(), &a.scaled(-1.0)) < 1e-20);
        let fa = poly_eval(&Polynomial::monomial(1.0, 2), &a).unwrap();
        assert!(dist_sq(&fa.sep, &a) < 1e-20);
        let r = covariance_residual(&a, &b, &Polynomial::monomial(1.0, 2)).unwrap();
        assert!(merged_l2_norm_sq(&r, a.left_support, unit()).unwrap() < 1e-20);
        assert!(kernel_l2_norm_sq(&r, a.left_support, unit()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn power_one_is_identity_and_power_zero_rejected() {
        let (a, _) = projection_pair();
        assert_eq!(power(&a, 1).unwrap(), a);
        assert!(power(&a, 0).is_err());
    }

    #[test]
    fn polynomial_trims_and_evaluates() {
        let p = Polynomial::new(vec![1.0, 2.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.degree(), 1);
        assert_eq!(p.eval(3.0), 7.0);
        assert_eq!(Polynomial::new(vec![0.0, 0.0]).unwrap().coeffs(), &[0.0]);
        assert!(Polynomial::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn constant_polynomial_has_zero_sep() {
        let (a, _) = projection_pair();
        let fa = poly_eval(&Polynomial::new(vec![2.5]).unwrap(), &a).unwrap();
        assert_eq!(fa.scalar, 2.5);
        assert!(fa.sep.coeff.iter().all(|&c| c == 0.0));
        let id = poly_eval(&Polynomial::identity(), &a).unwrap();
        assert_eq!((id.scalar, id.sep), (0.0, a));
    }

    #[test]
    fn sine_product_norm() {
        let s = FunctionAtom::sin(PI);
        let op = SeparableOperator::from_diagonal(vec![s], &[1.0], vec![s], unit(), unit()).unwrap();
        let k = KernelSum::single(op);
        assert_relative_eq!(kernel_l2_norm_sq(&k, unit(), unit()).unwrap(), 0.25, epsilon = 1e-15);
        assert_relative_eq!(merged_l2_norm_sq(&k, unit(), unit()).unwrap(), 0.25, epsilon = 1e-15);
        assert_eq!(gram_cross(&[s], &[s], unit()).unwrap()[(0, 0)], 0.5);
        assert_eq!(gram_cross(&[s], &[s], Interval::of(0.3, 0.3)).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn commutator_with_self_vanishes() {
        let (a, _) = projection_pair();
        let k = commutator(&a, &a).unwrap();
        assert!(merged_l2_norm_sq(&k, a.left_support, unit()).unwrap() < 1e-24);
    }

    #[test]
    fn compose_with_zero() {
        let (a, b) = projection_pair();
        let z = b.with_coeff(DMatrix::zeros(2, 2));
        assert!(compose(&a, &z).unwrap().coeff.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn operator_json_round_trip() {
        let (a, _) = projection_pair();
        let s = serde_json::to_string(&a).unwrap();
        let back: SeparableOperator = serde_json::from_str(&s).unwrap();
        assert_eq!(a, back);
        let bad = s.replace("[4.0,-3.0]", "[4.0]");
        assert!(serde_json::from_str::<SeparableOperator>(&bad).is_err());
    }
}
