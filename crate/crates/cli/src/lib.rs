//! Pipeline stages behind the `vaps` command.
//!
//! Every stage reads its inputs from files under one output directory,
//! writes its artifacts there and records a manifest in `manifests/`.

mod config;
mod manifest;
mod pipeline;
mod report;
mod variant;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{ProtocolKind, RunConfig, ScorerKind, Selection};
pub use manifest::{sha256_file, sha256_hex, Manifest};
pub use pipeline::{run_stage, Paths, Stage, StageOutput};
pub use report::{collect_reports, discover, render_report, ReportRow};
pub use variant::Variant;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("missing {}: run {stage} first", path.display())]
    Missing { path: PathBuf, stage: &'static str },
    #[error("invalid data: {0}")]
    Data(String),
    #[error("{0}")]
    Io(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Missing { .. } => 3,
            Self::Data(_) => 4,
            Self::Io(_) => 1,
        }
    }
}
