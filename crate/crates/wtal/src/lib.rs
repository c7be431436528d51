//! Standard-library companion to `wtal-core`: binary and text file formats,
//! dataset manifests, run configuration, report tables and the `wtal`
//! command-line driver.

pub mod binary;
pub mod cli;
pub mod config;
pub mod error;
pub mod manifest;
pub mod stages;
pub mod text;

pub use config::{EvalPreset, RunConfig};
pub use error::{Result, WtalError};
pub use manifest::{load_dataset, write_dataset};
