//! Phase transition of 1-D total-variation minimization.
//!
//! The crate covers the whole pipeline from signal structure to empirical
//! validation:
//!
//! - [`diffop`]: the finite-difference operator `B`, its Gram matrix and
//!   closed-form inverses, and block-tridiagonal solves.
//! - [`pattern`]: flat-group structure of a signal and the explicit
//!   subgradient `v0` that makes the TV subdifferential weakly decomposable.
//! - [`geometry`]: squared distances to `lambda * subdiff` and to its cone,
//!   Monte Carlo estimates of their Gaussian means, and the predicted curve.
//! - [`solver`]: a primal-dual solver for `min ||Bx||_1 s.t. Ax = y`.
//! - [`experiments`]: randomized recovery experiments over the phase plane.
//! - [`io`] and [`cli`]: file formats and the `tvpt` command line.

pub mod cli;
pub mod diffop;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod io;
pub mod isotonic;
pub mod pattern;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{CurvePoint, DimensionEstimate, DistanceResult, SandwichReport};
pub use pattern::{FlatGroup, GradientPattern, SubgradientCertificate};
pub use solver::{Matrix, SolveOptions, SolveReport};
