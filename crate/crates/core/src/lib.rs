//! Spectral Galerkin solver for the 2D incompressible Navier–Stokes equations
//! with prescribed tangential wall velocity.
//!
//! The boundary datum is lifted into the domain by a divergence-free
//! cutoff field concentrated near the walls, the remaining homogeneous
//! problem is projected onto eigenfunctions of the discrete Stokes operator,
//! and reproductive data (`u(T) = u(0)`) are found by Picard iteration of
//! the period map.

// `!(x > 0.0)` is used deliberately so that NaN parameters are rejected,
// and the dense tensor kernels read more clearly with explicit indices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod banded;
pub mod error;
pub mod field;
pub mod fixtures;
pub mod galerkin;
pub mod grid;
pub mod lanczos;
pub mod lift;
pub mod ops;
pub mod poisson;
pub mod reproductive;
pub mod snapshot;
pub mod stokes;
pub mod stream;
pub mod verification;

pub use error::{Error, Result};
pub use field::{Location, ScalarField, VectorField, WallTrace};
pub use grid::{DomainKind, Grid};
