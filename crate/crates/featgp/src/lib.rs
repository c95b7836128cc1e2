//! File formats, the model bundle and the `featgp` command line built on
//! [`featgp_core`].

pub mod benchmark;
pub mod bundle;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod schema;
pub mod table;

pub use bundle::ModelBundle;
pub use config::{RunConfig, Subcommand};
pub use error::{CliError, Result};
