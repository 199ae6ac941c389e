//! Cadlag geometric rough paths of step 2, Marcus-type canonical rough
//! differential equations, and robust nonlinear filtering for
//! jump-diffusions with correlated and common noise.

pub mod cadlag_path;
pub mod error;
pub mod experiments;
pub mod fillin;
pub mod filter;
pub mod lift;
pub mod rde;
pub mod real;
pub mod sim;
pub mod tensor_group;

pub use error::{Error, Result};
