//! Command implementations and the report format behind the `martinlab` binary.

pub mod commands;
pub mod report;
