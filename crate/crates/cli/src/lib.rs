//! Pipeline driver behind the `srfe` binary.

pub mod commands;
pub mod config;

pub use commands::{build_tables, cmd_eval, cmd_extract, cmd_report, cmd_split, cmd_train, FeatureReport};
pub use config::{FeatureSelection, RunConfig};
