//! Command-line driver, CSV ingestion, configuration and the parallel Monte
//! Carlo harness for `sellab-core`.

pub mod cli;
pub mod config;
pub mod io;
pub mod mc;
pub mod report;
