//! File formats, experiment pipelines and the command-line driver for
//! ensemble sparse models. The numerics live in `ensparse-core`.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod formats;
pub mod imageio;
pub mod synth;
pub mod table;

pub use error::{Error, Result};
