// `!(x > 0.0)` is used on purpose: it rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod error;
pub mod mfpt;
pub mod model;
pub mod numerics;
pub mod race;
pub mod sim;

pub use error::{Error, Result};
