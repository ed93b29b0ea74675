//! Command-line front end for `podrom`: config loading, output formats and subcommands.

pub mod commands;
pub mod config;
pub mod formats;
