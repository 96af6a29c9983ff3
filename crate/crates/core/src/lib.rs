//! Multiple-excitation magnetorelaxometry imaging: Biot-Savart forward model,
//! compressed-sensing coil activations, TV-regularized reconstruction and the
//! analysis tools around them.

// `!(x > 0.0)` is used on purpose so that NaN is rejected along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod model;
pub mod phantom;
pub mod sensing;
pub mod solvers;

pub use error::{Error, ErrorKind, Result};
