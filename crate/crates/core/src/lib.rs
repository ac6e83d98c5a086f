//! Verification and experimentation toolkit for symmetric control systems
//! `x' = sigma(x) a` with `a` in the closed unit ball.
//!
//! The crate is organised bottom-up:
//!
//! * [`poly`]: multivariate polynomials with exact differentiation,
//! * [`sysmodel`]: polynomial sigma-fields, the Hamiltonian `H(x,p) = |p sigma(x)|`,
//!   its `p`-gradient, the feedback law and the singular-set indicator,
//! * [`candidates`]: closed-form candidate functions `U` with exact derivatives,
//! * [`aronsson`]: residuals of the Aronsson equation, the S-matrix test,
//!   monotonicity certificates, the absolute-minimality sampler and the
//!   representation formula,
//! * [`dynamics`]: closed-loop Hamiltonian dynamics with event detection,
//! * [`mintime`]: reach-time bounds, a Kruzkov value-iteration oracle for the
//!   minimum time function and regularity moduli,
//! * [`cli`]: the config-driven experiment runner behind the `aronsson` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aronsson;
pub mod candidates;
pub mod cli;
pub mod controls;
pub mod domain;
pub mod dynamics;
pub mod error;
pub mod mintime;
pub mod ode;
pub mod poly;
pub mod sysmodel;

pub use candidates::{Candidate, CandidateEval, ValueAlongGradient};
pub use domain::BoxDomain;
pub use error::{Error, Result};
pub use poly::{Monomial, Polynomial};
pub use sysmodel::{Hamiltonian, HamiltonianMode, PolyMatrixField, Regularity, SystemCatalogEntry};

/// Euclidean norm of a slice.
pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
