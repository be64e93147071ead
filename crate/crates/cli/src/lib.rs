//! Command-line front end: experiment configuration, the staged pipeline,
//! and report and plot emission.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{ExperimentConfig, Preset};
pub use pipeline::{run_pipeline, Manifest};

/// Exit status for configuration problems.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for failures while running.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CliError>,
    },
    #[error(transparent)]
    Core(#[from] fairlayout::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Core(fairlayout::Error::Config(_)) => EXIT_CONFIG,
            Self::Stage { source, .. } => source.exit_code(),
            _ => EXIT_RUNTIME,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
