//! HTTP gateway and command-line front end for the note pipeline.

pub mod cli;
pub mod client;
pub mod config;
pub mod ops;
pub mod service;
