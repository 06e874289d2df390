//! Numerical laboratory for the American put exercise boundary near maturity
//! under a finite-activity jump diffusion.

pub mod error;
pub mod american;
pub mod asymptotics;
pub mod auxiliary;
pub mod checks;
pub mod european;
pub mod levy_model;
pub mod obstacle;
pub mod roots;
pub mod special;

pub use error::{Error, Result};
