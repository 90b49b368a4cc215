//! Library surface of the faithcheck CLI: run configuration, the command
//! pipeline, report writers, and schema validation. The binary in `main.rs`
//! is a thin argument-parsing layer over this.

pub mod config;
pub mod outputs;
pub mod pipeline;
pub mod schema;
