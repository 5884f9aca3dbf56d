//! Command-line pipeline driver and HTTP inference service for emoseq.

pub mod commands;
pub mod service;

pub use commands::run;
