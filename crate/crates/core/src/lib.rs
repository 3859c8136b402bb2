//! Finite element and convolution quadrature solver for a coupled pair of
//! time-fractional Fokker–Planck equations with two internal states.

// NaN-rejecting guards are written as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod cq;
pub mod error;
pub mod fem;
pub mod field;
pub mod harness;
pub mod linsolve;
pub mod mesh;
pub mod multigrid;
pub mod oracle;
pub mod par;
pub mod problems;
pub mod quadrature;
pub mod sparse;
pub mod stepper;

pub use error::{Error, Result};
