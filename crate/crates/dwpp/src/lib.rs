//! File formats, parallel study runner and command-line plumbing for
//! `dwpp-core`.

pub mod commands;
pub mod config;
pub mod fit;
pub mod io;
pub mod study;
pub mod synthetic;
