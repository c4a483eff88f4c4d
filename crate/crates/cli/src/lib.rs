//! Command-line front end for the geodistort indicators.

pub mod cli;
pub mod config;
pub mod pipeline;
