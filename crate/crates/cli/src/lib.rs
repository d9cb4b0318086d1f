//! Library surface of the command-line driver: config parsing, subcommand
//! drivers, result emission, and SVG plotting. The `hetsim` binary is a thin
//! argument-parsing wrapper over these modules.

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;
