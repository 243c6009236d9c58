//! Numerical laboratory for the quasilinear elliptic problem
//!
//! ```text
//!     -div(a(u) grad u) + c(x) u = 0   in Ω,      u = g   on ∂Ω
//! ```
//!
//! and its Dirichlet-to-Neumann map `g ↦ a(u) ∂ₙu`.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`]: structured P1 triangulations of the unit square and unit disk.
//! - [`coeffs`]: admissible coefficients `a(u)`, `c(x)`, the Kirchhoff
//!   primitive `A`, its inverse `H` and the difference primitive `B`.
//! - [`fem`]: sparse assembly, Jacobi-preconditioned CG, Dirichlet solves.
//! - [`solver`]: Picard and Kirchhoff routes for the quasilinear problem.
//! - [`dtn`]: weak conormal pairings, the linearized DtN matrix and the
//!   small-amplitude linearization limit.
//! - [`probes`]: fundamental-solution probes, cap data and integrals, and
//!   the two blow-up sweeps.
//! - [`recon`]: staged recovery of `a(0)`, `c(x)` and `a(u)` from
//!   synthetic boundary data.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coeffs;
pub mod dtn;
pub mod error;
pub mod fem;
pub mod io;
pub mod mesh;
pub mod probes;
pub mod quadrature;
pub mod recon;
pub mod solver;
pub mod stats;

pub use coeffs::{primitive_b, CoefficientA, CoefficientC};
pub use dtn::{DtnResponse, LinearDtnMatrix};
pub use error::{Error, Result};
pub use fem::{BoundaryDatum, CgOptions, ScalarField, SparseOperator};
pub use mesh::{BoundaryEdge, Region, TriangleMesh};
pub use solver::{Forward, SolveOptions, SolvePath, SolveReport};
