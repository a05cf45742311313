//! Batch front end for the design search: configuration, design files and
//! the subcommands behind the `glmm-design` binary.

pub mod commands;
pub mod config;
pub mod design_file;
pub mod error;

pub use error::{CliError, CliResult};
