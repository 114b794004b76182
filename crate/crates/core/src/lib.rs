pub mod attractor;
pub mod cli;
pub mod config;
pub mod error;
pub mod evolution;
pub mod fit;
pub mod initial;
pub mod io;
pub mod kernels;
pub mod memory_spaces;
pub mod modal;
pub mod quadrature;
pub mod viscoelastic;

pub use error::{Error, Result};
