//! Pipeline driver for the `salref` command-line tool.

pub mod config;
pub mod manifest;
pub mod pipeline;

pub use config::RunConfig;
