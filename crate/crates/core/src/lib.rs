//! Simulation of Byzantine-robust distributed optimization with loopless
//! variance reduction.
//!
//! The crate covers LIBSVM data handling ([`data_io`]), the regularized
//! logistic-regression finite sum ([`objective`]), robust aggregation rules
//! ([`aggregation`]), Byzantine attacks ([`attacks`]), the round-based
//! simulator ([`engine`]), reference solutions and theory-side diagnostics
//! ([`analysis`]), and the experiment harness behind the binary ([`cli`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod analysis;
pub mod attacks;
pub mod cli;
pub mod data_io;
pub mod engine;
pub mod error;
pub mod objective;

pub use error::{Error, Result};
