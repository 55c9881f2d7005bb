//! Command-line workflow and HTTP inference service on top of
//! `etongue-core`.

pub mod cli;
pub mod config;
pub mod service;
