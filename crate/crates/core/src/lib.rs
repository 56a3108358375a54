//! Optimal control of diffusions conditioned by a soft killing potential,
//! solved by coupled PDEs and by weighted particles.

// NaN must fail the positivity checks
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod control;
pub mod coupler;
pub mod error;
pub mod fpk;
pub mod grid;
pub mod hjb;
pub mod model;
pub mod particle;
pub mod policy;

pub use error::{Error, Result};
