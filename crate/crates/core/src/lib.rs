// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coda;
pub mod data;
pub mod distributions;
pub mod error;
pub mod inference;
pub mod io;
pub mod model_selection;
pub mod model_spec;
pub mod predict;
pub mod sim;
pub mod spatial;
pub mod special;
pub mod system;

pub use error::{LndmError, Result};
