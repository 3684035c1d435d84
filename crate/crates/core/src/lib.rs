//! Backstepping output regulation for 2×2 linear hyperbolic systems with
//! integral action, an ε-blended boundary observer and stability analysis
//! of the induced neutral delay equation.

// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod kernels;
pub mod model;
pub mod nde;
pub mod observer;
pub mod plant;
pub mod sim;
pub mod steady;

pub use error::{Error, Result};
