//! Simulation and auditing toolkit for a time-periodic chemotaxis–Stokes
//! system with porous-medium cell diffusion and Robin oxygen exchange.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod coeffs;
pub mod config;
pub mod diagnostics;
pub mod diffusion;
pub mod error;
pub mod expr;
pub mod grid;
pub mod integrator;
pub mod linalg;
pub mod mms;
pub mod output;
pub mod periodic;
pub mod robin;
pub mod stokes;
pub mod transport;

pub use error::{Error, Result};
