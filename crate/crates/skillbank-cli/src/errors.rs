//! Error type carrying the stable exit-code contract:
//! 0 success, 1 usage/config, 2 no-match, 3 data error, 4 model-response.

use skillbank_core::annotate::AnnotateError;
use skillbank_core::modelgw::GatewayError;
use skillbank_core::plan::PlanError;
use skillbank_core::retrieve::RetrieveError;
use skillbank_core::synth::SynthError;
use skillbank_core::taxonomy::{StoreError, TaxonomyError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    NoMatch(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    ModelResponse(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::NoMatch(_) => 2,
            CliError::Data(_) => 3,
            CliError::ModelResponse(_) => 4,
        }
    }

    pub fn usage(msg: impl std::fmt::Display) -> Self {
        CliError::Usage(msg.to_string())
    }

    pub fn data(msg: impl std::fmt::Display) -> Self {
        CliError::Data(msg.to_string())
    }
}

impl From<GatewayError> for CliError {
    fn from(err: GatewayError) -> Self {
        match err {
            GatewayError::FixtureMiss { .. }
            | GatewayError::MalformedResponse(_)
            | GatewayError::DimensionMismatch { .. } => CliError::ModelResponse(err.to_string()),
            GatewayError::BackendUnavailable(_) | GatewayError::ImageUnreadable { .. } => {
                CliError::Data(err.to_string())
            }
        }
    }
}

impl From<StoreError> for CliError {
    fn from(err: StoreError) -> Self {
        CliError::Data(err.to_string())
    }
}

impl From<RetrieveError> for CliError {
    fn from(err: RetrieveError) -> Self {
        match err {
            RetrieveError::NoMatch { .. } => CliError::NoMatch(err.to_string()),
            RetrieveError::Gateway(gateway) => gateway.into(),
            RetrieveError::InvalidParams(msg) => CliError::Usage(msg),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(err: SynthError) -> Self {
        match err {
            SynthError::Retrieve(inner) => inner.into(),
            SynthError::Gateway(inner) => inner.into(),
            SynthError::MissingDepth { .. } | SynthError::Geometry(_) | SynthError::Io(_) => {
                CliError::Data(err.to_string())
            }
            SynthError::MalformedResponse(_)
            | SynthError::UnknownGridLabel(_)
            | SynthError::OutOfBoundsPoint { .. } => CliError::ModelResponse(err.to_string()),
            SynthError::AllPointsBehindCamera => CliError::Data(err.to_string()),
            SynthError::InvalidScene(_) => CliError::Usage(err.to_string()),
        }
    }
}

impl From<PlanError> for CliError {
    fn from(err: PlanError) -> Self {
        match err {
            PlanError::Gateway(inner) => inner.into(),
            PlanError::InvalidLibrary(_) => CliError::Usage(err.to_string()),
            PlanError::MalformedResponse(_)
            | PlanError::MalformedSignature { .. }
            | PlanError::NameCollision(_)
            | PlanError::UnknownSkill { .. }
            | PlanError::UnknownRole { .. } => CliError::ModelResponse(err.to_string()),
        }
    }
}

impl From<TaxonomyError> for CliError {
    fn from(err: TaxonomyError) -> Self {
        match err {
            TaxonomyError::Gateway(inner) => inner.into(),
            TaxonomyError::InvalidTheta(_) => CliError::Usage(err.to_string()),
            _ => CliError::Data(err.to_string()),
        }
    }
}

impl From<AnnotateError> for CliError {
    fn from(err: AnnotateError) -> Self {
        match err {
            AnnotateError::Gateway(inner) => inner.into(),
            AnnotateError::MalformedResponse(_) | AnnotateError::MalformedSignature { .. } => {
                CliError::ModelResponse(err.to_string())
            }
            _ => CliError::Data(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Data(err.to_string())
    }
}
