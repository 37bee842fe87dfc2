use std::process::ExitCode;

use thiserror::Error;
use trajkg::analytics::AnalyticsError;
use trajkg::graph::GraphError;
use trajkg::ingest::IngestError;
use trajkg::mapping::MappingError;
use trajkg::provider::{ExtractionError, ProviderError, TemplateError};
use trajkg::trajectory::{ResponseError, TrajectoryError};

/// Every failure maps onto one process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or missing input files, config or arguments. Exit 2.
    #[error("{0}")]
    Input(String),
    /// The extraction provider failed. Exit 3.
    #[error("{0}")]
    Provider(String),
    /// An artifact failed validation. Exit 4.
    #[error("{0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Input(_) => 2,
            CliError::Provider(_) => 3,
            CliError::Validation(_) => 4,
        })
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::Template(_) | ProviderError::Config(_) => CliError::Input(e.to_string()),
            _ => CliError::Provider(e.to_string()),
        }
    }
}

impl From<TemplateError> for CliError {
    fn from(e: TemplateError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ExtractionError> for CliError {
    fn from(e: ExtractionError) -> Self {
        match e {
            ExtractionError::Precondition(_) => CliError::Validation(e.to_string()),
            ExtractionError::AllMalformed { .. } => CliError::Provider(e.to_string()),
            ExtractionError::Provider(p) => p.into(),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Provider { source, .. } => {
                let message = format!("refinement failed: {source}");
                match CliError::from(source) {
                    CliError::Provider(_) => CliError::Provider(message),
                    _ => CliError::Input(message),
                }
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Validation(_) => CliError::Validation(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<MappingError> for CliError {
    fn from(e: MappingError) -> Self {
        match e {
            MappingError::Provider { ref source, .. }
                if !matches!(
                    source,
                    ProviderError::Config(_) | ProviderError::Template(_)
                ) =>
            {
                CliError::Provider(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<ResponseError> for CliError {
    fn from(e: ResponseError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<TrajectoryError> for CliError {
    fn from(e: TrajectoryError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<AnalyticsError> for CliError {
    fn from(e: AnalyticsError) -> Self {
        CliError::Input(e.to_string())
    }
}
