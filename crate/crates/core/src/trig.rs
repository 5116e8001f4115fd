//! The four-term trigonometric family with a common frequency `ω`:
//!
//! `θ₁ sin(ωt)cos(ωs) + θ₂ cos(ωt)cos(ωs) + θ₃ sin(ωt)sin(ωs) + θ₄ cos(ωt)sin(ωs)`.
//!
//! When `sin` and `cos` are orthogonal on the domain, the operator reduces to the
//! 2×2 matrix `[[θ₁, θ₃], [θ₂, θ₄]]` (rows `sin, cos` in t, columns `cos, sin` in s)
//! and every pairing reduces to `[[0, σ₂], [σ₁, 0]]`.

use nalgebra::{Matrix2, Matrix4};

use crate::atoms::{pair, sigma1, sigma2, AtomKind, FunctionAtom, Interval, PairingConfig};
use crate::error::Result;
use crate::operator::SeparableOperator;

pub type Theta = [f64; 4];

pub fn four_term_operator(omega: f64, theta: Theta, domain: Interval, support: Interval) -> Result<SeparableOperator> {
    let (s, c) = (FunctionAtom::sin(omega), FunctionAtom::cos(omega));
    SeparableOperator::from_diagonal(vec![s, c, s, c], &theta, vec![c, c, s, s], domain, support)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourTerm {
    pub omega: f64,
    pub theta: Theta,
}

impl FourTerm {
    /// Recognizes the family layout, folding atom scales into `θ`.
    pub fn detect(op: &SeparableOperator) -> Option<Self> {
        if op.rank_left() != 4 || op.rank_right() != 4 {
            return None;
        }
        let omega = match op.left[0].kind {
            AtomKind::Sin(w) => w,
            _ => return None,
        };
        let left = [AtomKind::Sin(omega), AtomKind::Cos(omega), AtomKind::Sin(omega), AtomKind::Cos(omega)];
        let right = [AtomKind::Cos(omega), AtomKind::Cos(omega), AtomKind::Sin(omega), AtomKind::Sin(omega)];
        let free = |a: &FunctionAtom, on: Interval| a.restriction.is_none_or(|r| r.covers(&on));
        let layout = op.left.iter().zip(left).all(|(a, k)| a.kind == k && free(a, op.left_support))
            && op.right.iter().zip(right).all(|(a, k)| a.kind == k && free(a, op.domain));
        let diagonal = (0..4).all(|i| (0..4).all(|j| i == j || op.coeff[(i, j)] == 0.0));
        if !layout || !diagonal {
            return None;
        }
        let theta = std::array::from_fn(|i| op.coeff[(i, i)] * op.left[i].scale * op.right[i].scale);
        Some(Self { omega, theta })
    }

    /// Both operators in the family on one orthogonal domain: returns them with `σ₁, σ₂`.
    pub fn detect_pair(a: &SeparableOperator, b: &SeparableOperator) -> Option<(Self, Self, f64, f64)> {
        let (fa, fb) = (Self::detect(a)?, Self::detect(b)?);
        let g = a.domain;
        let same_geometry = fa.omega == fb.omega
            && fa.omega != 0.0
            && g == b.domain
            && !g.is_degenerate()
            && a.left_support == b.left_support
            && a.left_support.covers(&g);
        if !same_geometry {
            return None;
        }
        let w = fa.omega;
        let cross = pair(&FunctionAtom::sin(w), &FunctionAtom::cos(w), g, &PairingConfig::default()).ok()?;
        if cross.abs() > 1e-14 * (1.0 + g.len()) {
            return None;
        }
        Some((fa, fb, sigma1(w, g.lo, g.hi), sigma2(w, g.lo, g.hi)))
    }
}

pub fn coeff_matrix(theta: &Theta) -> Matrix2<f64> {
    Matrix2::new(theta[0], theta[2], theta[1], theta[3])
}

/// `W[j][k] = Q(right_j, left_k)` for right `cos, sin` and left `sin, cos`.
pub fn pairing_matrix(s1: f64, s2: f64) -> Matrix2<f64> {
    Matrix2::new(0.0, s2, s1, 0.0)
}

/// Entries `(sin·cos, cos·cos, sin·sin, cos·sin)` of a 2×2 kernel matrix.
pub fn flatten(m: &Matrix2<f64>) -> Theta {
    [m[(0, 0)], m[(1, 0)], m[(0, 1)], m[(1, 1)]]
}

/// `AB − δ B A²` on the 2×2 representation.
pub fn abstract_residual(tha: &Theta, thb: &Theta, delta: f64, s1: f64, s2: f64) -> Matrix2<f64> {
    let (a, b, w) = (coeff_matrix(tha), coeff_matrix(thb), pairing_matrix(s1, s2));
    a * w * b - b * w * a * w * a * delta
}

/// `AB − BA` on the 2×2 representation.
pub fn abstract_commutator(tha: &Theta, thb: &Theta, s1: f64, s2: f64) -> Matrix2<f64> {
    let (a, b, w) = (coeff_matrix(tha), coeff_matrix(thb), pairing_matrix(s1, s2));
    a * w * b - b * w * a
}

/// Closed-form commutator coefficients in the order `sin·cos, cos·cos, sin·sin, cos·sin`.
pub fn commutator_coefficients(tha: &Theta, thb: &Theta, s1: f64, s2: f64) -> Theta {
    let [a1, a2, a3, a4] = *tha;
    let [b1, b2, b3, b4] = *thb;
    [
        a3 * b1 * s1 - b3 * a1 * s1 + a1 * b2 * s2 - b1 * a2 * s2,
        (a4 * b1 - a1 * b4) * s1,
        (a1 * b4 - b1 * a4) * s2,
        a4 * b3 * s1 - b4 * a3 * s1 + a2 * b4 * s2 - b2 * a4 * s2,
    ]
}

/// The 4×4 matrix with `V θ_B = 0` equivalent to `AB = δBA²`, entry by entry.
pub fn explicit_v(tha: &Theta, delta: f64, s1: f64, s2: f64) -> Matrix4<f64> {
    let [a1, a2, a3, a4] = *tha;
    let d = delta;
    let m1 = -(d * a3 * a1 * s1 * s1 + d * a1 * a2 * s1 * s2);
    let m2 = -d * a2 * a4 * s2 * s2 - d * a4 * a3 * s1 * s2;
    #[rustfmt::skip]
    let v = Matrix4::new(
        a3 * s1 - d * a4 * a1 * s1 * s2 - d * a2 * a2 * s2 * s2, a1 * s2, m1, 0.0,
        a4 * s1, a2 * s2 - d * a4 * a1 * s1 * s2 - d * a2 * a2 * s2 * s2, 0.0, m1,
        m2, 0.0, a3 * s1 - d * a3 * a3 * s1 * s1 - d * a4 * a1 * s1 * s2, a1 * s2,
        0.0, m2, a4 * s1, a2 * s2 - d * a3 * a3 * s1 * s1 - d * a4 * a1 * s1 * s2,
    );
    v
}

/// Determinant of [`explicit_v`], by LU.
pub fn detv_trig(tha: &Theta, delta: f64, s1: f64, s2: f64) -> f64 {
    explicit_v(tha, delta, s1, s2).determinant()
}

/// Factored determinant valid when `θ_{A,4} = 0`.
pub fn detv_factored_a4_zero(tha: &Theta, delta: f64, s1: f64, s2: f64) -> f64 {
    let [_, a2, a3, _] = *tha;
    let d = delta;
    -a2 * a3 * s1 * s2
        * (d * a3 * a3 * s1 * s1 - a2 * s2)
        * (a3 * s1 - d * a2 * a2 * s2 * s2)
        * (d * a2 * s2 - 1.0)
        * (d * a3 * s1 - 1.0)
}

/// The product with `δθ₃²σ₁²` in place of the factor `δθ₃²σ₁² − θ₂σ₂`.
/// Not equal to det V; kept so reports can show how far it is off.
pub fn detv_factored_a4_zero_truncated(tha: &Theta, delta: f64, s1: f64, s2: f64) -> f64 {
    let [_, a2, a3, _] = *tha;
    let d = delta;
    d * a3.powi(3) * a2 * s1.powi(3) * s2
        * (a2 * a2 * d * s2 * s2 - a3 * s1)
        * (d * a2 * s2 - 1.0)
        * (d * a3 * s1 - 1.0)
}
