//! Benchmarking toolkit for continuous-variable channels that transmit or
//! amplify coherent states with non-unit gain.

pub mod bounds;
pub mod certifier;
pub mod cli;
pub mod ensembles;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod proofcheck;
pub mod schemes;

pub use error::{Error, Result};
pub use nalgebra;
pub use num_complex;
