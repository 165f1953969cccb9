//! File formats, command-line interface and parallel Monte Carlo on top of
//! [`orthwalk_core`].

pub mod cli;
pub mod formats;
pub mod manifest;
pub mod parallel;

pub use orthwalk_core as core;
