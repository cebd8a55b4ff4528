//! Library half of the `nkit` command line tool: document schema, command
//! dispatch and report rendering.

pub mod doc;
pub mod emit;
pub mod export;
pub mod run;
pub mod selftest;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
