//! Configuration, file formats and experiment suites on top of `scoregen-core`.
//!
//! Every experiment is a function from a validated [`ExperimentConfig`] to
//! in-memory [`Table`]s; the command line and the acceptance suite both call
//! these functions, and only [`output`] touches the filesystem.

pub mod audit;
pub mod config;
pub mod error;
pub mod experiments;
pub mod netfile;
pub mod output;
pub mod table;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use table::Table;
