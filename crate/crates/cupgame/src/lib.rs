//! Experiment runner, file formats and command line for cup games.

pub mod cli;
pub mod experiment;
pub mod spec_file;
pub mod suite;
pub mod trace;
