//! File formats, the Monte Carlo harness and the command-line front end
//! for the private dHSIC tests in [`dpdhsic_core`].

pub mod audit;
pub mod cli;
pub mod dagfile;
pub mod error;
pub mod generators;
pub mod harness;
pub mod io;
pub mod methods;

pub use dpdhsic_core as core;
pub use error::{AppError, AppResult, ParseError};
