//! HTTP service and command-line front end for the compliance engine.

pub mod api;
pub mod cli;
pub mod config;
pub mod engine;
