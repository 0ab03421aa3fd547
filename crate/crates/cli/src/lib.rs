//! Library behind the `popsync` binary: config parsing, the four command
//! pipelines (analyze, simulate, sweep, verify), and CSV writers. Kept as a
//! library so integration tests can drive the exact command logic in-process.

pub mod commands;
pub mod config;
pub mod output;
