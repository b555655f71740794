//! File formats, dataset loaders, multi-party simulation, experiment drivers
//! and the `dpbv` command line, on top of `dpbv-core`.

pub mod config;
pub mod data;
pub mod datasets;
pub mod encoded;
pub mod manifest;
pub mod matrix;
pub mod simulate;
pub mod experiments;
pub mod cli;
