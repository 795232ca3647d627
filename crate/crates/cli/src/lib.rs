//! Command-line front end: configuration, benchmark harness and commands.

pub mod app;
pub mod bench;
pub mod config;
