//! Positive doubly stochastic matrices with a prescribed spectrum.
//!
//! The problem is posed as an underdetermined nonlinear matrix equation on the
//! product manifold of positive doubly stochastic matrices, orthogonal
//! matrices and two structured matrix spaces, and solved by Riemannian
//! inexact Newton-CG. Invariant subspaces of the result are extracted from its
//! real Schur form.

pub mod balance;
pub mod bench;
pub mod error;
pub mod io;
pub mod linalg;
pub mod manifolds;
pub mod operator;
pub mod solver;
pub mod spectrum;
pub mod subspaces;

pub use error::{Error, Result};
