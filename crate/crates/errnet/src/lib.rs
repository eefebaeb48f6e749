//! File formats, dataset layout, configuration and the command line around
//! [`errnet_core`].

pub use errnet_core as core;

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod pnm;

pub use error::{CliError, Result};
