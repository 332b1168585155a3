//! File formats, training loop, evaluation reports and the `kgsub` command
//! line, on top of `kgsub-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod manifest;
pub mod report;
pub mod theory_check;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use config::Config;
pub use error::{Error, Result};
pub use trainer::{train, LogRecord, Trainer};
