#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod error_variance;
pub mod fs;
pub mod hedge;
pub mod levy;
pub mod model;
pub mod payoff;
pub mod quadrature;

pub use error::{Error, Result};
