//! Deciding `AB = B·F(A)` region by region.
//!
//! With `G = G_A ∩ G_B` the residual kernel is tested on `X×G` (condition 1),
//! `X×(G_A∖G)` (condition 2) and `X×(G_B∖G)` (condition 3), where `X` is the
//! hull of both left supports. Each residual term carries its own s-domain,
//! so only the `B·F(A)` part reaches region 2 and only `AB` and `δ₀B` reach region 3.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::atoms::{pair, FunctionAtom, Interval, PairingConfig};
use crate::error::{Error, Result};
use crate::operator::{
    compose, covariance_residual, power, KernelSum, MergedKernel, Polynomial, SeparableOperator,
};
use crate::trig::FourTerm;

pub const DEFAULT_TOL: f64 = 1e-10;

/// Grid points per axis for the pointwise check.
pub const GRID: usize = 20;

/// Pointwise threshold, relative to `1 + scale`.
pub const POINTWISE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    General,
    RankOne,
    Orthogonality,
    Commutativity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub holds: bool,
    #[serde(rename = "residual_on_G")]
    pub residual_on_g: f64,
    #[serde(rename = "residual_on_GA_minus_G")]
    pub residual_on_ga_minus_g: f64,
    #[serde(rename = "residual_on_GB_minus_G")]
    pub residual_on_gb_minus_g: f64,
    pub tolerance_used: f64,
    pub scale: f64,
    /// Violated conditions, numbered 1 to 3.
    pub violated: Vec<u8>,
    pub method: Method,
}

impl CovarianceReport {
    pub fn residuals(&self) -> [f64; 3] {
        [self.residual_on_g, self.residual_on_ga_minus_g, self.residual_on_gb_minus_g]
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals().into_iter().fold(0.0, f64::max)
    }

    pub(crate) fn from_parts(residuals: [f64; 3], pointwise: [bool; 3], tol: f64, scale: f64, method: Method) -> Self {
        let thr = tol * (1.0 + scale);
        let violated: Vec<u8> = (0..3)
            .filter(|&k| !(residuals[k] <= thr) || !pointwise[k])
            .map(|k| k as u8 + 1)
            .collect();
        CovarianceReport {
            holds: violated.is_empty(),
            residual_on_g: residuals[0],
            residual_on_ga_minus_g: residuals[1],
            residual_on_gb_minus_g: residuals[2],
            tolerance_used: tol,
            scale,
            violated,
            method,
        }
    }
}

/// `X`, and the pieces of `G`, `G_A∖G`, `G_B∖G` with positive length.
#[derive(Clone, Debug, PartialEq)]
pub struct Regions {
    pub x: Interval,
    pub pieces: [Vec<Interval>; 3],
}

pub fn regions(a: &SeparableOperator, b: &SeparableOperator) -> Regions {
    let g = a.domain.intersect(&b.domain);
    let minus = |d: Interval| match g {
        Some(g) => d.minus(&g),
        None if d.is_degenerate() => vec![],
        None => vec![d],
    };
    Regions {
        x: a.left_support.hull(&b.left_support),
        pieces: [
            g.filter(|g| !g.is_degenerate()).into_iter().collect(),
            minus(a.domain),
            minus(b.domain),
        ],
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("tol must be a positive finite number, got {tol}")))
    }
}

fn midpoints(iv: Interval) -> impl Iterator<Item = f64> {
    let h = iv.len() / GRID as f64;
    (0..GRID).map(move |i| iv.lo + h * (i as f64 + 0.5))
}

/// Largest `|K(t,s)|` over the midpoint grid of `x × s_region`.
pub fn grid_max(k: &KernelSum, x: Interval, s_region: Interval) -> Result<f64> {
    let mut worst = 0.0f64;
    for t in midpoints(x) {
        for s in midpoints(s_region) {
            worst = worst.max(k.kernel(t, s)?.abs());
        }
    }
    Ok(worst)
}

/// Residual L2 norm and pointwise verdict per condition.
pub fn region_residuals(k: &KernelSum, reg: &Regions, scale: f64) -> Result<([f64; 3], [bool; 3])> {
    let mut norms = [0.0; 3];
    let mut pointwise = [true; 3];
    for (c, pieces) in reg.pieces.iter().enumerate() {
        let mut sq = 0.0;
        for &piece in pieces {
            sq += MergedKernel::build(k, reg.x, piece).l2_norm_sq(reg.x, piece)?.max(0.0);
            if grid_max(k, reg.x, piece)? > POINTWISE_TOL * (1.0 + scale) {
                pointwise[c] = false;
            }
        }
        norms[c] = sq.sqrt();
    }
    Ok((norms, pointwise))
}

fn general(a: &SeparableOperator, b: &SeparableOperator, f: &Polynomial, tol: f64, method: Method) -> Result<CovarianceReport> {
    check_tol(tol)?;
    let r = covariance_residual(a, b, f)?;
    let scale = r.scale();
    let (norms, pointwise) = region_residuals(&r, &regions(a, b), scale)?;
    Ok(CovarianceReport::from_parts(norms, pointwise, tol, scale, method))
}

pub fn check_covariance(a: &SeparableOperator, b: &SeparableOperator, f: &Polynomial, tol: f64) -> Result<CovarianceReport> {
    general(a, b, f, tol, Method::General)
}

/// L2 norm of `Σ c_i u_i` on `region` after merging atoms equal up to scale.
pub(crate) fn combo_norm(terms: &[(f64, FunctionAtom)], region: Interval) -> Result<f64> {
    let mut atoms: Vec<FunctionAtom> = Vec::new();
    let mut coef: Vec<f64> = Vec::new();
    let mut index = HashMap::new();
    for (c, atom) in terms {
        let Some((unit, factor)) = atom.restricted(region).canonical() else {
            continue;
        };
        let i = *index.entry(unit.key()).or_insert_with(|| {
            atoms.push(unit);
            coef.push(0.0);
            atoms.len() - 1
        });
        coef[i] += c * factor;
    }
    let cfg = PairingConfig::default();
    let mut sq = 0.0;
    for (i, u) in atoms.iter().enumerate() {
        for (j, v) in atoms.iter().enumerate() {
            sq += coef[i] * coef[j] * pair(u, v, region, &cfg)?;
        }
    }
    Ok(sq.max(0.0).sqrt())
}

fn pieces_norm(terms: &[(f64, FunctionAtom)], pieces: &[Interval]) -> Result<f64> {
    let mut sq = 0.0;
    for &p in pieces {
        sq += combo_norm(terms, p)?.powi(2);
    }
    Ok(sq.sqrt())
}

/// Rank-one fast path with `k₁ = Q_{G_B}(a,e) Σ_{j≥1} δ_j γ^{j−1}`, `γ = Q_{G_A}(a,c)`,
/// `k₂ = Q_{G_A}(b,c)`.
pub fn check_rank_one(a: &SeparableOperator, b: &SeparableOperator, f: &Polynomial, tol: f64) -> Result<CovarianceReport> {
    check_tol(tol)?;
    for (name, op) in [("A", a), ("B", b)] {
        if op.rank_left() != 1 || op.rank_right() != 1 {
            return Err(Error::Argument(format!(
                "check_rank_one needs rank-1 operators, {name} is {}x{}",
                op.rank_left(),
                op.rank_right()
            )));
        }
    }
    let cfg = PairingConfig::default();
    let av = a.left_effective()[0].scaled(a.coeff[(0, 0)]);
    let bv = b.left_effective()[0].scaled(b.coeff[(0, 0)]);
    let (c, e) = (a.right[0], b.right[0]);

    let gamma = pair(&c, &av, a.domain, &cfg)?;
    let delta = f.coeffs();
    let series: f64 = delta.iter().skip(1).rev().fold(0.0, |acc, d| acc * gamma + d);
    let k1 = pair(&e, &av, b.domain, &cfg)? * series;
    let k2 = pair(&c, &bv, a.domain, &cfg)?;
    let d0 = delta[0];

    let reg = regions(a, b);
    let x = reg.x;
    let u = [(k2, av), (-d0, bv)];
    let b_sq = combo_norm(&[(1.0, bv)], x)?.powi(2);
    let lambda = if b_sq == 0.0 {
        0.0
    } else if k2 != 0.0 {
        let ub = k2 * pair(&av, &bv, x, &cfg)? - d0 * pair(&bv, &bv, x, &cfg)?;
        ub / b_sq
    } else {
        -d0
    };

    let r1 = match reg.pieces[0].first() {
        Some(&g) => {
            let u_par = combo_norm(&[(k2, av), (-d0 - lambda, bv)], x)?;
            u_par * combo_norm(&[(1.0, e)], g)? + b_sq.sqrt() * combo_norm(&[(k1, c), (-lambda, e)], g)?
        }
        None => 0.0,
    };
    let r2 = k1.abs() * b_sq.sqrt() * pieces_norm(&[(1.0, c)], &reg.pieces[1])?;
    let r3 = combo_norm(&u, x)? * pieces_norm(&[(1.0, e)], &reg.pieces[2])?;

    let scale = covariance_residual(a, b, f)?.scale();
    Ok(CovarianceReport::from_parts([r1, r2, r3], [true; 3], tol, scale, Method::RankOne))
}

/// `(a_j, c_j)` pairs with `a_j = Σ_i C_ij l_i`, skipping columns of zeros.
fn column_pairs(op: &SeparableOperator) -> Vec<(Vec<(f64, FunctionAtom)>, FunctionAtom)> {
    let left = op.left_effective();
    (0..op.rank_right())
        .filter(|&j| op.coeff.column(j).iter().any(|&c| c != 0.0))
        .map(|j| {
            let combo = left.iter().enumerate().map(|(i, l)| (op.coeff[(i, j)], *l)).collect();
            (combo, op.right[j])
        })
        .collect()
}

fn combo_pair(us: &[(f64, FunctionAtom)], v: &FunctionAtom, g: Interval) -> Result<f64> {
    let cfg = PairingConfig::default();
    us.iter().try_fold(0.0, |acc, (c, u)| Ok(acc + c * pair(u, v, g, &cfg)?))
}

/// Sufficient test `Q_G(b_k, c_m) = Q_G(e_k, a_m) = 0` for `AB = δBA^d = 0`.
pub fn check_orthogonality_sufficient(a: &SeparableOperator, b: &SeparableOperator, d: u32, tol: f64) -> Result<bool> {
    check_tol(tol)?;
    if d == 0 {
        return Err(Error::Argument("d must be >= 1".into()));
    }
    if a.domain != b.domain {
        return Err(Error::Argument("orthogonality test needs A.domain == B.domain".into()));
    }
    let g = a.domain;
    let (pa, pb) = (column_pairs(a), column_pairs(b));
    for (am, cm) in &pa {
        let na = combo_norm(am, g)?;
        let nc = combo_norm(&[(1.0, *cm)], g)?;
        for (bk, ek) in &pb {
            let q1 = combo_pair(bk, cm, g)?;
            let q2 = combo_pair(am, ek, g)?;
            let nb = combo_norm(bk, g)?;
            let ne = combo_norm(&[(1.0, *ek)], g)?;
            if q1.abs() > tol * (1.0 + nb * nc) || q2.abs() > tol * (1.0 + ne * na) {
                return Ok(false);
            }
        }
    }
    let reg = regions(a, b);
    for (name, op) in [("AB", compose(a, b)?), ("BA^d", compose(b, &power(a, d)?)?)] {
        let k = KernelSum::single(op);
        let (norms, pointwise) = region_residuals(&k, &reg, k.scale())?;
        let thr = tol * (1.0 + k.scale());
        if norms.iter().any(|&n| n > thr) || pointwise.contains(&false) {
            return Err(Error::Numerical(format!(
                "cross pairings vanish but {name} is not kernel-zero (residual {:.3e})",
                norms[0]
            )));
        }
    }
    Ok(true)
}

/// `AB = BA` via the general test; the four-term trig family is also decided
/// by its closed-form commutator coefficients and the two verdicts must agree.
pub fn check_commutativity(a: &SeparableOperator, b: &SeparableOperator, tol: f64) -> Result<CovarianceReport> {
    let report = general(a, b, &Polynomial::identity(), tol, Method::Commutativity)?;
    if let Some((fa, fb, s1, s2)) = FourTerm::detect_pair(a, b) {
        let coeffs = crate::trig::commutator_coefficients(&fa.theta, &fb.theta, s1, s2);
        let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
        let closed = norm <= tol * (1.0 + report.scale);
        if closed != report.holds {
            return Err(Error::Numerical(format!(
                "closed-form commutator criterion ({closed}) disagrees with kernel test ({}), coefficients {coeffs:?}",
                report.holds
            )));
        }
    }
    Ok(report)
}
