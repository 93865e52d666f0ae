//! Configuration and orchestration behind the `mcflab` binary.

pub mod config;
pub mod run;
