//! Library surface of the `dualrail` command-line tool: design-document
//! parsing, report/trajectory formats, and the command implementations.
//! The binary in `main.rs` is a thin dispatcher over [`commands`].

pub mod commands;
pub mod formats;
pub mod schema;
