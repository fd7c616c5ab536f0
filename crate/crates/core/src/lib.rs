//! Exact computation and empirical verification for the divisor problem with
//! congruence conditions.
//!
//! `d(n; r1, q1, r2, q2)` counts ordered factorizations `n = n1 n2` with
//! `n_i = r_i (mod q_i)`; `D(x)` is its summatory function and
//! `Delta(x) = D(x) - M(x)` the error term against the smooth main term `M`.

// `!(x >= a)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arith;
pub mod engine;
pub mod integrate;
mod error;
pub mod quadrature;
pub mod signs;
pub mod statistics;
pub mod voronoi;

pub use arith::{CongruenceClass, CongruenceParams};
pub use engine::{DeltaEvaluator, DivisorSieve, Segment, SieveOptions};
pub use error::{Error, Result};
