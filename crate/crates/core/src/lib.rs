// `!(x > 0.0)` guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod distributions;
pub mod error;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod montecarlo;
pub mod robust;
pub mod stats;

pub use error::{Error, Result};
