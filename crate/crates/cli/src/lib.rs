//! Library half of the `flowpath` experiment CLI: configuration schema, the
//! protocol runner (inject → split → normalize → train → evaluate), and the
//! output writers the subcommands share.

pub mod commands;
pub mod config;
pub mod runner;
