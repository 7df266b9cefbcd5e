pub mod analysis;
pub mod cli;
pub mod config;
pub mod correlate;
pub mod error;
pub mod ingest;
pub mod model;
pub mod report;
pub mod simgen;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
