//! Solving `AB = B·F(A)` for unknown coefficients.
//!
//! For fixed `A` the residual is linear in `B`, so `B` comes from a nullspace.
//! For fixed `B` it is polynomial in `A` and we run damped Newton from many seeds.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::atoms::{FunctionAtom, Interval};
use crate::covariance::{check_covariance, regions, Regions};
use crate::error::{Error, Result};
use crate::operator::{
    compose, compose_affine, covariance_residual, poly_eval, KernelSum, MergedKernel, Polynomial, SeparableOperator,
};

pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Eigenvalue ratio below which a Gram matrix counts as singular.
const GRAM_COND: f64 = 1e-10;

/// Largest parameter count for which the `3^k` seed lattice is generated.
pub const MAX_LATTICE_DIM: usize = 5;

const MAX_NEWTON_STEPS: usize = 100;

/// `constant + Σ w_i θ_i`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AffineEntry {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl AffineEntry {
    pub fn fixed(v: f64) -> Self {
        Self { constant: v, terms: vec![] }
    }

    pub fn param(i: usize) -> Self {
        Self { constant: 0.0, terms: vec![(i, 1.0)] }
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        self.terms.iter().fold(self.constant, |acc, &(i, w)| acc + w * theta[i])
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum EntryRepr {
    Fixed(f64),
    Param {
        param: usize,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        weight: f64,
    },
    Affine {
        #[serde(default)]
        constant: f64,
        terms: Vec<(usize, f64)>,
    },
}

fn one() -> f64 {
    1.0
}

fn is_one(w: &f64) -> bool {
    *w == 1.0
}

impl From<&AffineEntry> for EntryRepr {
    fn from(e: &AffineEntry) -> Self {
        match e.terms.as_slice() {
            [] => EntryRepr::Fixed(e.constant),
            &[(param, weight)] if e.constant == 0.0 => EntryRepr::Param { param, weight },
            _ => EntryRepr::Affine { constant: e.constant, terms: e.terms.clone() },
        }
    }
}

impl From<EntryRepr> for AffineEntry {
    fn from(r: EntryRepr) -> Self {
        match r {
            EntryRepr::Fixed(v) => AffineEntry::fixed(v),
            EntryRepr::Param { param, weight } => AffineEntry { constant: 0.0, terms: vec![(param, weight)] },
            EntryRepr::Affine { constant, terms } => AffineEntry { constant, terms },
        }
    }
}

/// Operator whose coefficient entries depend affinely on a parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamRepr", into = "ParamRepr")]
pub struct ParamOperator {
    pub left: Vec<FunctionAtom>,
    pub entries: Vec<Vec<AffineEntry>>,
    pub right: Vec<FunctionAtom>,
    pub domain: Interval,
    pub left_support: Interval,
    pub n_params: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamRepr {
    left: Vec<FunctionAtom>,
    coeff: Vec<Vec<EntryRepr>>,
    right: Vec<FunctionAtom>,
    domain: Interval,
    left_support: Interval,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_params: Option<usize>,
}

impl TryFrom<ParamRepr> for ParamOperator {
    type Error = Error;
    fn try_from(r: ParamRepr) -> Result<Self> {
        let entries: Vec<Vec<AffineEntry>> =
            r.coeff.into_iter().map(|row| row.into_iter().map(AffineEntry::from).collect()).collect();
        let used = entries.iter().flatten().flat_map(|e| e.terms.iter().map(|t| t.0 + 1)).max().unwrap_or(0);
        let n_params = r.n_params.unwrap_or(used);
        ParamOperator::new(r.left, entries, r.right, r.domain, r.left_support, n_params)
            .map_err(|e| Error::Input(e.to_string()))
    }
}

impl From<ParamOperator> for ParamRepr {
    fn from(p: ParamOperator) -> Self {
        ParamRepr {
            coeff: p.entries.iter().map(|row| row.iter().map(EntryRepr::from).collect()).collect(),
            left: p.left,
            right: p.right,
            domain: p.domain,
            left_support: p.left_support,
            n_params: Some(p.n_params),
        }
    }
}

impl ParamOperator {
    pub fn new(
        left: Vec<FunctionAtom>,
        entries: Vec<Vec<AffineEntry>>,
        right: Vec<FunctionAtom>,
        domain: Interval,
        left_support: Interval,
        n_params: usize,
    ) -> Result<Self> {
        if entries.len() != left.len() || entries.iter().any(|r| r.len() != right.len()) {
            return Err(Error::Argument(format!(
                "template coeff must be {}x{}",
                left.len(),
                right.len()
            )));
        }
        if let Some(bad) = entries.iter().flatten().flat_map(|e| &e.terms).find(|t| t.0 >= n_params) {
            return Err(Error::Argument(format!("parameter index {} out of range ({n_params} params)", bad.0)));
        }
        let op = Self { left, entries, right, domain, left_support, n_params };
        op.instantiate(&vec![0.0; n_params])?;
        Ok(op)
    }

    /// Template `Σ θ_i E_ii` over a diagonal coefficient matrix.
    pub fn diagonal(op: &SeparableOperator) -> Result<Self> {
        let n = op.rank_left().min(op.rank_right());
        let entries = (0..op.rank_left())
            .map(|i| {
                (0..op.rank_right())
                    .map(|j| if i == j { AffineEntry::param(i) } else { AffineEntry::default() })
                    .collect()
            })
            .collect();
        Self::new(op.left.clone(), entries, op.right.clone(), op.domain, op.left_support, n)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.entries.iter().flatten().all(|e| e.constant == 0.0)
    }

    pub fn instantiate(&self, theta: &[f64]) -> Result<SeparableOperator> {
        if theta.len() != self.n_params {
            return Err(Error::Argument(format!(
                "expected {} parameters, got {}",
                self.n_params,
                theta.len()
            )));
        }
        let coeff = DMatrix::from_fn(self.left.len(), self.right.len(), |i, j| self.entries[i][j].eval(theta));
        SeparableOperator::new(self.left.clone(), coeff, self.right.clone(), self.domain, self.left_support)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveKind {
    Nullspace,
    Roots,
    Family,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub kind: SolveKind,
    pub vectors: Vec<Vec<f64>>,
    pub nullspace_dim: usize,
    pub residuals: Vec<f64>,
}

/// `Λ^{1/2} Uᵀ` over the numerically nonzero eigenpairs of a Gram matrix.
fn whitener(gram: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(gram.clone());
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > 1e-12 * top).collect();
    DMatrix::from_fn(keep.len(), gram.ncols(), |r, c| {
        eig.eigenvalues[keep[r]].sqrt() * eig.eigenvectors[(c, keep[r])]
    })
}

fn well_conditioned(gram: &DMatrix<f64>) -> bool {
    let eig = SymmetricEigen::new(gram.clone());
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi > 0.0 && lo > GRAM_COND * hi
}

/// Coordinates of a residual on one region piece.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Rows {
    /// Coefficients on the merged basis, right-major.
    Raw,
    /// Coefficients mapped through the Gram square roots, so the Euclidean norm is the L2 norm.
    Whitened,
}

fn region_vector(k: &KernelSum, reg: &Regions, rows: Option<Rows>) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for pieces in &reg.pieces {
        for &piece in pieces {
            let m = MergedKernel::build(k, reg.x, piece);
            if m.coeff.is_empty() {
                continue;
            }
            let (gt, gs) = m.grams(reg.x, piece)?;
            let mode = rows.unwrap_or(if well_conditioned(&gt) && well_conditioned(&gs) {
                Rows::Raw
            } else {
                Rows::Whitened
            });
            match mode {
                Rows::Raw => out.extend(m.coeff.iter().copied()),
                Rows::Whitened => {
                    let w = whitener(&gt) * &m.coeff * whitener(&gs).transpose();
                    out.extend(w.iter().copied());
                }
            }
        }
    }
    Ok(out)
}

fn assemble(
    a: &SeparableOperator,
    template: &ParamOperator,
    residual: impl Fn(&SeparableOperator) -> Result<KernelSum>,
) -> Result<DMatrix<f64>> {
    if !template.is_homogeneous() {
        return Err(Error::Argument("B template must be homogeneous (no constant parts)".into()));
    }
    let n = template.n_params;
    if n == 0 {
        return Err(Error::Argument("B template has no parameters".into()));
    }
    let mut cols = Vec::with_capacity(n);
    for i in 0..n {
        let mut theta = vec![0.0; n];
        theta[i] = 1.0;
        let b = template.instantiate(&theta)?;
        cols.push(region_vector(&residual(&b)?, &regions(a, &b), None)?);
    }
    let rows = cols[0].len();
    if cols.iter().any(|c| c.len() != rows) {
        return Err(Error::Numerical("residual bases differ between template columns".into()));
    }
    Ok(DMatrix::from_fn(rows, n, |r, c| cols[c][r]))
}

/// `V` with `V θ = 0` exactly when the residual of `AB = B·F(A)` vanishes for `B(θ)`.
///
/// Rows are stacked region by region. On a region where both merged bases are
/// linearly independent the rows are the raw coefficients of the residual on
/// the atom products, in right-major order; otherwise they are whitened.
pub fn build_linear_system_for_b(a: &SeparableOperator, f: &Polynomial, template: &ParamOperator) -> Result<DMatrix<f64>> {
    assemble(a, template, |b| covariance_residual(a, b, f))
}

/// Same layout as [`build_linear_system_for_b`] for `AB + B·F(A)`: the size of
/// the two sides before they cancel, used as the reference for rank decisions.
fn reference_system(a: &SeparableOperator, f: &Polynomial, template: &ParamOperator) -> Result<DMatrix<f64>> {
    assemble(a, template, |b| {
        let mut k = KernelSum::single(compose(a, b)?);
        k.terms.extend(compose_affine(b, &poly_eval(f, a)?)?.terms);
        Ok(k)
    })
}

/// Orthonormal basis of the numerical nullspace, via SVD with cutoff `rank_tol·σ_max`.
pub fn nullspace(v: &DMatrix<f64>, rank_tol: f64) -> Result<SolveResult> {
    nullspace_with_reference(v, rank_tol, 0.0)
}

/// As [`nullspace`] with cutoff `rank_tol·max(σ_max, reference)`, so a matrix that
/// is zero only up to rounding of much larger terms is recognized as zero.
pub fn nullspace_with_reference(v: &DMatrix<f64>, rank_tol: f64, reference: f64) -> Result<SolveResult> {
    if v.is_empty() {
        return Err(Error::Argument("nullspace of an empty matrix".into()));
    }
    if !(rank_tol > 0.0) {
        return Err(Error::Argument(format!("rank_tol must be > 0, got {rank_tol}")));
    }
    let n = v.ncols();
    let padded = if v.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.rows_mut(0, v.nrows()).copy_from(v);
        p
    } else {
        v.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.as_ref().ok_or_else(|| Error::Numerical("SVD did not return V".into()))?;
    let cutoff = rank_tol * svd.singular_values.max().max(reference);
    let vectors: Vec<Vec<f64>> = (0..n)
        .filter(|&i| svd.singular_values[i] <= cutoff)
        .map(|i| vt.row(i).iter().copied().collect())
        .collect();
    let residuals = vectors.iter().map(|x| (v * DVector::from_column_slice(x)).norm()).collect();
    Ok(SolveResult { kind: SolveKind::Nullspace, nullspace_dim: vectors.len(), vectors, residuals })
}

/// Nullspace of [`build_linear_system_for_b`], each basis vector checked with
/// `check_covariance` at `10·tol`.
pub fn solve_for_b(
    a: &SeparableOperator,
    f: &Polynomial,
    template: &ParamOperator,
    rank_tol: f64,
    tol: f64,
) -> Result<SolveResult> {
    let v = build_linear_system_for_b(a, f, template)?;
    let reference = reference_system(a, f, template)?.norm();
    let mut res = nullspace_with_reference(&v, rank_tol, reference)?;
    res.residuals.clear();
    for x in &res.vectors {
        let report = check_covariance(a, &template.instantiate(x)?, f, 10.0 * tol)?;
        if !report.holds {
            return Err(Error::Numerical(format!(
                "nullspace vector {x:?} fails the covariance check (residual {:.3e})",
                report.max_residual()
            )));
        }
        res.residuals.push(report.max_residual());
    }
    Ok(res)
}

fn residual_of_a(b: &SeparableOperator, f: &Polynomial, template: &ParamOperator, theta: &[f64]) -> Result<(DVector<f64>, f64)> {
    let a = template.instantiate(theta)?;
    let k = covariance_residual(&a, b, f)?;
    let v = region_vector(&k, &regions(&a, b), Some(Rows::Whitened))?;
    Ok((DVector::from_vec(v), k.scale()))
}

fn newton(
    b: &SeparableOperator,
    f: &Polynomial,
    template: &ParamOperator,
    seed: &[f64],
    tol: f64,
) -> Result<Option<(Vec<f64>, f64)>> {
    let n = seed.len();
    let mut theta = seed.to_vec();
    let (mut r, mut scale) = residual_of_a(b, f, template, &theta)?;
    for _ in 0..MAX_NEWTON_STEPS {
        if r.norm() <= tol * (1.0 + scale) {
            return Ok(Some((theta, r.norm())));
        }
        let mut jac = DMatrix::zeros(r.len(), n);
        for i in 0..n {
            let h = 1e-6 * (1.0 + theta[i].abs());
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[i] += h;
            down[i] -= h;
            let (ru, _) = residual_of_a(b, f, template, &up)?;
            let (rd, _) = residual_of_a(b, f, template, &down)?;
            jac.set_column(i, &((ru - rd) / (2.0 * h)));
        }
        let svd = jac.svd(true, true);
        let eps = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
        let step = svd.solve(&r, eps).map_err(|e| Error::Numerical(e.to_string()))?;
        let mut alpha = 1.0;
        let current = r.norm();
        loop {
            let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t - alpha * s).collect();
            let (rt, st) = residual_of_a(b, f, template, &trial)?;
            if rt.norm() < current {
                theta = trial;
                r = rt;
                scale = st;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-10 {
                return Ok(None);
            }
        }
    }
    Ok((r.norm() <= tol * (1.0 + scale)).then(|| (theta, r.norm())))
}

/// Seeds followed by the lattice `{−1, 0, 1}^k / |δ_lead|` (only for `k ≤ MAX_LATTICE_DIM`).
pub fn seed_list(user: &[Vec<f64>], k: usize, f: &Polynomial) -> Vec<Vec<f64>> {
    let mut seeds = user.to_vec();
    if k == 0 || k > MAX_LATTICE_DIM {
        return seeds;
    }
    let lead = f.leading().abs();
    let step = if lead > 0.0 { 1.0 / lead } else { 1.0 };
    for code in 0..3usize.pow(k as u32) {
        let mut c = code;
        let point = (0..k)
            .map(|_| {
                let digit = (c % 3) as f64 - 1.0;
                c /= 3;
                digit * step
            })
            .collect();
        seeds.push(point);
    }
    seeds
}

/// Damped Newton from every seed; distinct converged points that pass
/// `check_covariance` at `10·tol` are returned in seed order.
pub fn solve_for_a_given_b(
    b: &SeparableOperator,
    f: &Polynomial,
    template: &ParamOperator,
    seeds: &[Vec<f64>],
    tol: f64,
) -> Result<SolveResult> {
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("tol must be > 0, got {tol}")));
    }
    let k = template.n_params;
    if let Some(bad) = seeds.iter().find(|s| s.len() != k) {
        return Err(Error::Argument(format!("seed {bad:?} does not have {k} entries")));
    }
    let mut vectors: Vec<Vec<f64>> = Vec::new();
    let mut residuals = Vec::new();
    for seed in seed_list(seeds, k, f) {
        let Some((theta, res)) = newton(b, f, template, &seed, tol)? else {
            continue;
        };
        let distinct = vectors.iter().all(|v| {
            v.iter().zip(&theta).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() > 1e-6
        });
        if distinct && check_covariance(&template.instantiate(&theta)?, b, f, 10.0 * tol)?.holds {
            vectors.push(theta);
            residuals.push(res);
        }
    }
    Ok(SolveResult { kind: SolveKind::Roots, nullspace_dim: 0, vectors, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trig::{detv_trig, explicit_v, four_term_operator};
    use std::f64::consts::PI;

    fn case2(theta: [f64; 4]) -> SeparableOperator {
        four_term_operator(PI, theta, Interval::of(0.25, 0.75), Interval::of(0.0, 1.0)).unwrap()
    }

    fn sig() -> (f64, f64) {
        (crate::atoms::sigma1(PI, 0.25, 0.75), crate::atoms::sigma2(PI, 0.25, 0.75))
    }

    #[test]
    fn built_v_matches_explicit_entries() {
        let tha = [0.7, -0.3, 1.4, 0.5];
        let a = case2(tha);
        let t = ParamOperator::diagonal(&a).unwrap();
        let (s1, s2) = sig();
        let delta = 1.7;
        let v = build_linear_system_for_b(&a, &Polynomial::monomial(delta, 2), &t).unwrap();
        let e = explicit_v(&tha, delta, s1, s2);
        assert_eq!(v.shape(), (4, 4));
        assert!((v - e).abs().max() < 1e-12);
    }

    #[test]
    fn all_free_nullspace() {
        let (s1, s2) = sig();
        let delta = 0.8;
        let a = case2([0.0, 1.0 / (delta * s2), 1.0 / (delta * s1), 0.0]);
        let t = ParamOperator::diagonal(&a).unwrap();
        let res = solve_for_b(&a, &Polynomial::monomial(delta, 2), &t, DEFAULT_RANK_TOL, 1e-10).unwrap();
        assert_eq!(res.nullspace_dim, 4);
    }

    #[test]
    fn generic_a_has_trivial_nullspace() {
        let tha = [0.0, 0.6, -0.9, 0.0];
        let (s1, s2) = sig();
        assert!(detv_trig(&tha, 1.1, s1, s2).abs() > 1e-6);
        let a = case2(tha);
        let t = ParamOperator::diagonal(&a).unwrap();
        let res = solve_for_b(&a, &Polynomial::monomial(1.1, 2), &t, DEFAULT_RANK_TOL, 1e-10).unwrap();
        assert_eq!(res.nullspace_dim, 0);
    }

    #[test]
    fn identity_has_no_nullspace_and_empty_is_rejected() {
        assert_eq!(nullspace(&DMatrix::identity(3, 3), 1e-9).unwrap().nullspace_dim, 0);
        assert!(nullspace(&DMatrix::zeros(0, 0), 1e-9).is_err());
        assert_eq!(nullspace(&DMatrix::zeros(1, 3), 1e-9).unwrap().nullspace_dim, 3);
    }

    #[test]
    fn zero_a_gives_zero_v() {
        let a = case2([0.0; 4]);
        let t = ParamOperator::diagonal(&a).unwrap();
        let v = build_linear_system_for_b(&a, &Polynomial::monomial(2.0, 2), &t).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn inhomogeneous_template_rejected() {
        let a = case2([1.0; 4]);
        let mut t = ParamOperator::diagonal(&a).unwrap();
        t.entries[0][0].constant = 1.0;
        assert!(matches!(
            build_linear_system_for_b(&a, &Polynomial::identity(), &t),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn equal_coefficient_b_recovers_a() {
        let (s1, s2) = sig();
        let (delta, b1, b2) = (1.2, 0.9, -0.4);
        let b = case2([b1, b2, b1, b2]);
        let t = ParamOperator::diagonal(&b).unwrap();
        let d = delta * (b1 * s1 + b2 * s2);
        let expect = [b1 / d, b2 / d, b1 / d, b2 / d];
        let seed: Vec<f64> = expect.iter().map(|x| x * 1.05 + 0.01).collect();
        let f = Polynomial::monomial(delta, 2);
        let exact = solve_for_a_given_b(&b, &f, &t, &[expect.to_vec()], 1e-10).unwrap();
        for k in 0..4 {
            assert!((exact.vectors[0][k] - expect[k]).abs() < 1e-12);
        }
        // the root set is not isolated, so a perturbed seed lands on a neighbouring root
        let near = solve_for_a_given_b(&b, &f, &t, &[seed], 1e-10).unwrap();
        let dist: f64 = near.vectors[0].iter().zip(&expect).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(dist < 0.1, "{:?}", near.vectors[0]);
    }

    #[test]
    fn template_json_round_trip() {
        let a = case2([1.0; 4]);
        let mut t = ParamOperator::diagonal(&a).unwrap();
        t.entries[1][2] = AffineEntry { constant: 0.5, terms: vec![(0, 2.0), (3, -1.0)] };
        t.entries[2][2] = AffineEntry { constant: 0.0, terms: vec![(2, 3.0)] };
        let s = serde_json::to_string(&t).unwrap();
        let back: ParamOperator = serde_json::from_str(&s).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn seed_lattice_size() {
        let f = Polynomial::monomial(2.0, 2);
        assert_eq!(seed_list(&[], 2, &f).len(), 9);
        assert!(seed_list(&[], 2, &f).contains(&vec![0.5, -0.5]));
        assert!(seed_list(&[], MAX_LATTICE_DIM + 1, &f).is_empty());
    }
}
