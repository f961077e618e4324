//! Two-stage quasi-likelihood analysis of a Student-t Lévy regression
//! observed at high frequency.

// `!(x > 0.0)` rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cqmle;
pub mod error;
pub mod exec;
pub mod inference;
pub mod io;
pub mod mc;
pub mod model;
pub mod pipeline;
pub mod simulator;
pub mod specfun;
pub mod student_levy;
pub mod tqmle;

pub use error::Error;
pub use model::{substream_seed, SamplingDesign, Theta};
