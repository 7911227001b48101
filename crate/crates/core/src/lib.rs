pub mod anisotropy;
pub mod calibration;
pub mod cli;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod field;
pub mod identities;
pub mod numeric;
pub mod potential;
pub mod solver;

pub use error::{Error, Result};
