//! Reduced-order modelling of semilinear reaction–diffusion systems.
//!
//! The pipeline is: P1 finite-element full-order model ([`fem`], [`integrator`]) →
//! snapshot sets of divided differences or time derivatives ([`snapshots`]) →
//! H¹₀-weighted POD by the method of snapshots ([`pod`]) → POD-Galerkin reduced model
//! ([`rom`]) → pointwise-in-time error measurement and bound audits ([`harness`]).

// Index loops mirror the element formulas; `!(x > 0.0)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fem;
pub mod harness;
pub mod integrator;
pub mod linalg;
pub mod mesh;
pub mod pod;
pub mod problems;
pub mod rom;
pub mod snapshots;

pub use error::{PodError, Result};
