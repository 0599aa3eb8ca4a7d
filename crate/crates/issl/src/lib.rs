//! Command-line workflow around `issl-core`: corpus simulation, training,
//! localization, evaluation and threshold sweeps, plus the file formats
//! they exchange.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod error;
pub mod formats;
pub mod wav;

pub use config::RunConfig;
pub use error::{CliError, Result};
