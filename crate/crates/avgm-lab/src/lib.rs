//! Standard-library companion to `avgm-core`: run configuration files,
//! checkpoint and CSV formats, run directories, interpretability reports
//! and the command implementations behind the `avgm-lab` binary.

pub mod build;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod rundir;
