//! Horizon experiments: reference problems, file formats, sweeps over
//! truncation horizons and the command-line front end.

pub mod catalog;
pub mod format;
pub mod recover;
pub mod sweep;
pub mod cli;
pub mod report;
