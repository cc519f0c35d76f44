//! Library surface of the poselift CLI: config parsing and command
//! implementations, kept out of `main.rs` so integration tests can drive
//! them directly.

pub mod config;
