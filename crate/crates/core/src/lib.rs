#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angular;
pub mod cpfactor;
pub mod error;
pub mod harness;
pub mod io;
pub mod marginal;
pub mod model;
pub mod pipeline;
pub mod predictor;
pub mod quad;
pub mod reference;
mod serde_rows;
pub mod sim;
pub mod stats;
pub mod tpdm;
pub mod translin;

pub use error::{Error, ErrorKind, Result};
pub use nalgebra;
