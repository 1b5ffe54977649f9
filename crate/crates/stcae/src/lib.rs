//! File formats, dataset loading, reports and the command-line driver built
//! on `stcae-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod report;

pub use error::CliError;
