//! Configuration parsing and run orchestration for the `aosim` binary.

pub mod config;
pub mod execute;

pub use config::{config_hash, parse_config, render, ConfigErrors, Overrides, Parsed, RunConfig};
pub use execute::{execute, Completion, RunError};

/// Exit statuses of the binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const RUNTIME: i32 = 2;
    pub const VERIFICATION: i32 = 3;
}
