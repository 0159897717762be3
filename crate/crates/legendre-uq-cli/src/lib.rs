//! Library backing the `legendre-uq` binary: config parsing, the
//! subcommand runners, and the report writers. Split out of `main.rs` so
//! integration tests can exercise the pieces directly.
//!
//! The [`guide`] chapter documents the binary itself — config format,
//! subcommands, report files — with examples that compile against the
//! real config types.

pub mod config;
pub mod output;
pub mod runner;

#[doc = include_str!("../../../book/src/cli.md")]
pub mod guide {}
