//! Scenario runner for the `torus-drift` laboratory.
//!
//! [`scenario`] parses run files, [`run`] integrates every start on a
//! thread pool and writes plot-ready CSV next to a comparison report.

pub mod expr;
pub mod run;
pub mod scenario;

pub use run::{predict_all, run, write_outputs, Comparison, Report, Status};
pub use scenario::{parse_scenarios, parse_scenarios_str, Family, Scenario};

/// The bundled example run file.
pub const GALLERY: &str = include_str!("../gallery.toml");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Scenario(String),
    #[error("{0}")]
    Io(String),
}
