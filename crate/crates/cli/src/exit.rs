//! Mapping from library errors to process exit codes.

use std::fmt;
use std::process::ExitCode;

use tl_core::embedding::EmbeddingError;
use tl_core::generation::LabelError;
use tl_core::metric::MetricError;
use tl_core::pipeline::StageError;
use tl_core::selection::SelectionError;
use tl_core::topic_model::TopicError;
use tl_core::{ConfigError, CorpusError, PipelineError, ProviderError};

/// Exit codes are part of the command-line contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    Invalid = 1,
    Provider = 2,
    Internal = 3,
}

impl From<Status> for ExitCode {
    fn from(s: Status) -> Self {
        ExitCode::from(s as u8)
    }
}

#[derive(Debug)]
pub struct CliError {
    pub status: Status,
    pub message: String,
}

impl CliError {
    pub fn invalid(message: impl Into<String>) -> Self {
        Self {
            status: Status::Invalid,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            status: Status::Internal,
            message: message.into(),
        }
    }

    fn with(status: Status, e: impl fmt::Display) -> Self {
        Self {
            status,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn provider_status(e: &ProviderError) -> Status {
    match e {
        ProviderError::MissingApiKey(_) => Status::Invalid,
        _ => Status::Provider,
    }
}

fn embedding_status(e: &EmbeddingError) -> Status {
    match e {
        EmbeddingError::Provider(p) => provider_status(p),
        EmbeddingError::EmptyText => Status::Invalid,
        _ => Status::Internal,
    }
}

fn stage_status(e: &StageError) -> Status {
    match e {
        StageError::Provider(p) | StageError::Label(LabelError::Provider(p)) => provider_status(p),
        StageError::Embedding(e) | StageError::Metric(MetricError::Embedding(e)) => embedding_status(e),
        StageError::Store(_) => Status::Internal,
        _ => Status::Invalid,
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::with(Status::Invalid, e)
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        Self::with(Status::Invalid, e)
    }
}

impl From<TopicError> for CliError {
    fn from(e: TopicError) -> Self {
        Self::with(Status::Invalid, e)
    }
}

impl From<SelectionError> for CliError {
    fn from(e: SelectionError) -> Self {
        Self::with(Status::Invalid, e)
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        Self::with(provider_status(&e), e)
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        Self::with(embedding_status(&e), e)
    }
}

impl From<LabelError> for CliError {
    fn from(e: LabelError) -> Self {
        let status = match &e {
            LabelError::Provider(p) => provider_status(p),
            _ => Status::Invalid,
        };
        Self::with(status, e)
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        let status = match &e {
            MetricError::Embedding(inner) => embedding_status(inner),
            _ => Status::Invalid,
        };
        Self::with(status, e)
    }
}

impl From<StageError> for CliError {
    fn from(e: StageError) -> Self {
        Self::with(stage_status(&e), e)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::Stage { source, .. } => stage_status(source),
            PipelineError::ConfigDrift { .. } | PipelineError::Manifest { .. } | PipelineError::Config(_) => {
                Status::Invalid
            }
            PipelineError::CorruptStore { .. } | PipelineError::Io { .. } => Status::Internal,
        };
        Self::with(status, e)
    }
}
