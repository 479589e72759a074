//! Experiment runner, file formats and command-line front end for
//! `onebit-core`.

pub mod bench;
pub mod clock;
pub mod config;
pub mod experiment;
pub mod formats;
pub mod plots;
pub mod stats;

pub use onebit_core;
