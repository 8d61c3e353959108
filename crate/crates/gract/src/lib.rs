//! Command-line front end for `gract-core`: trace and report formats,
//! scheduling scripts and the `gract` binary.

pub mod cli;
pub mod json;
pub mod script;

pub use gract_core as core;
