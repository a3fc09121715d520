//! Theta-weighted Krylov iterates for linear inverse problems `A f = g`
//! with `A` self-adjoint, positive semidefinite and possibly with
//! unbounded inverse, together with the spectral machinery (spectral
//! measures, residual polynomials, error functionals) used to study
//! their convergence.

// Argument checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod krylov;
pub mod linalg;
pub mod linop;
pub mod measures;
pub mod orthopoly;

pub use error::{Error, Result};
