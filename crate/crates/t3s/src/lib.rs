//! File formats, experiment drivers and the command-line interface around
//! `t3s-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod io;
pub mod netpbm;
pub mod report;

pub use error::{Error, Result};
