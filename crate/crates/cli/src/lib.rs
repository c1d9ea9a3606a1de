//! File formats, configuration and command implementations for the
//! `cardiosig` pipeline.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod plot;

pub use config::RunConfig;
pub use error::{CliError, Result};
