//! Numerical laboratory for expanding CMC vacuum Einstein flows.
//!
//! Homogeneous (Bianchi) and Gowdy-symmetric evolutions, model solutions,
//! monotone functionals and rescaling diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod algebra;
pub mod bianchi;
pub mod coord;
pub mod error;
pub mod gowdy;
pub mod models;
pub mod monotone;
pub mod numeric;
pub mod ode;
pub mod scaling;
pub mod scenario;
pub mod tensor;

pub use error::{FlowError, Result};
