//! File formats, data ingestion and batch commands around `platoon-core`.

pub mod campaign;
pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod meta;
pub mod simcsv;

pub use error::{Error, ErrorKind, Result};
