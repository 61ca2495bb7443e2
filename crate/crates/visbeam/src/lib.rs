//! File formats, configuration, pipeline orchestration and timing for the
//! `visbeam` command line tool.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;

pub use config::{DetectorMode, RunConfig};
pub use error::{Error, Result};
