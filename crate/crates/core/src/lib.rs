//! Monte Carlo laboratory for quadratic BSDEs with stopping times: forward
//! simulation, least-squares backward solvers, generator approximation and
//! representation checks.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod approx;
pub mod bsde;
pub mod cli;
pub mod comparison;
pub mod error;
pub mod model;
pub mod numeric;
pub mod pathio;
pub mod report;
pub mod representation;
pub mod rng;
pub mod sde;

pub use error::{LabError, Result};
