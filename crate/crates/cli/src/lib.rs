//! Command-line workflow and HTTP service for the heartgen model.

pub mod api;
pub mod cli;
pub mod server;
