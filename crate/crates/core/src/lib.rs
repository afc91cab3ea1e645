//! Numerical certification of Lagrangian immersions into complex space
//! forms against the Whitney-sphere gap criterion.
//!
//! The pipeline runs from [`ambient`] (flat and Fubini-Study metrics with
//! exact curvature) through [`jets`] (derivatives of chart maps) and
//! [`geometry`] (second fundamental form, the trace-free tensor `B`, and
//! pointwise residuals) to [`field`], which samples a whole immersion on a
//! grid and evaluates the checks that need derivatives along it.
//! [`gallery`] provides the reference immersions, [`matrixineq`] the
//! commutator inequality for symmetric matrices, and [`cli`] the `whitney`
//! command-line tool.

// index loops mirror the tensor formulas they implement
#![allow(clippy::needless_range_loop)]

pub mod ambient;
pub mod cli;
pub mod dual;
pub mod error;
pub mod field;
pub mod gallery;
pub mod geometry;
pub mod jets;
pub mod linalg;
pub mod matrixineq;

pub use error::{Error, Result};
