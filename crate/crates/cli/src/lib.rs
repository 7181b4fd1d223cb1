//! Command-line pipeline and HTTP service around [`triage_core`].
//!
//! The `triage` binary wires these modules to subcommands; tests drive them
//! directly.

pub mod commands;
pub mod config;
pub mod service;
pub mod sessions;
pub mod workdir;
