use std::fmt;

use thiserror::Error;

/// Pipeline stage an error is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Align,
    FitMask,
    Extract,
    Spot,
    Evaluate,
    Report,
    Synth,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Align => "align",
            Stage::FitMask => "fit-mask",
            Stage::Extract => "extract",
            Stage::Spot => "spot",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
            Stage::Synth => "synth",
        })
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{stage} failed for {target}: {source}")]
    Stage {
        stage: Stage,
        target: String,
        #[source]
        source: mmspot::Error,
    },

    /// Inconsistent artifacts on disk, e.g. a broken manifest chain.
    #[error("data error: {0}")]
    Data(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Stage { source, .. } if source.is_config() => EXIT_CONFIG,
            CliError::Stage { .. } | CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Attaches a stage and target to core errors.
pub trait StageExt<T> {
    fn stage(self, stage: Stage, target: impl fmt::Display) -> CliResult<T>;
}

impl<T> StageExt<T> for mmspot::Result<T> {
    fn stage(self, stage: Stage, target: impl fmt::Display) -> CliResult<T> {
        self.map_err(|source| CliError::Stage {
            stage,
            target: target.to_string(),
            source,
        })
    }
}
