//! Finite-rank integral operators with separable kernels on bounded intervals.
//!
//! Operators are stored as atom lists plus a coefficient matrix, so products,
//! powers and polynomials reduce to Gram-matrix algebra on closed-form pairings.
//! On top of that sit a checker for the covariance relation `AB = B·F(A)`,
//! solvers for unknown coefficients, and a registry of known solution families.

pub mod atoms;
pub mod covariance;
pub mod error;
pub mod families;
pub mod operator;
pub mod scenario;
pub mod solver;
pub mod trig;

pub use atoms::{pair, quadrature, sigma1, sigma2, AtomKind, FunctionAtom, Interval, PairingConfig, PairingMethod};
pub use covariance::{
    check_commutativity, check_covariance, check_orthogonality_sufficient, check_rank_one, CovarianceReport, Method,
};
pub use error::{Error, Result};
pub use operator::{
    commutator, compose, compose_affine, gram_cross, kernel_l2_norm_sq, poly_eval, power, AffineOperator, KernelSum,
    Polynomial, SeparableOperator,
};
pub use solver::{
    build_linear_system_for_b, nullspace, solve_for_a_given_b, solve_for_b, AffineEntry, ParamOperator, SolveKind,
    SolveResult,
};
pub use families::{list_families, verify_family, VerifyOutcome};
pub use scenario::{Command, Scenario};
pub use trig::detv_trig;
