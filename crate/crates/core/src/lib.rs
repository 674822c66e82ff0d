//! Decay-rate bookkeeping for nonlinear waves on asymptotically flat
//! backgrounds, plus a radial solver and measurement tools to test the
//! predicted rates numerically.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod background;
pub mod bound;
pub mod calculus;
pub mod exponent;
pub mod fit;
pub mod harness;
pub mod iterate;
pub mod meter;
pub mod oracle;
pub mod problem;
pub mod solver;
pub mod stencil;
