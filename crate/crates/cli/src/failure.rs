//! Error classification into process exit codes.

use std::fmt;

use trackforge::io::IoError;
use trackforge::{BuildError, EntropyError, FlowError, PipelineError};

/// Success.
pub const EXIT_OK: u8 = 0;
/// Anything not covered below (I/O failures, internal errors).
pub const EXIT_OTHER: u8 = 1;
/// Unparseable or invalid input, including bad flags.
pub const EXIT_INPUT: u8 = 2;
/// A required flow field is unavailable.
pub const EXIT_MISSING_FLOW: u8 = 3;
/// A representative box has no probability record.
pub const EXIT_MISSING_PROBS: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }

    pub fn msg(code: u8, msg: impl fmt::Display + fmt::Debug + Send + Sync + 'static) -> Self {
        Self::new(code, anyhow::Error::msg(msg))
    }

    pub fn context(mut self, what: impl fmt::Display + Send + Sync + 'static) -> Self {
        self.error = self.error.context(what);
        self
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

fn flow_code(e: &FlowError) -> u8 {
    match e {
        FlowError::MissingFlow { .. } => EXIT_MISSING_FLOW,
        FlowError::Io(_) => EXIT_OTHER,
        _ => EXIT_INPUT,
    }
}

impl From<FlowError> for Failure {
    fn from(e: FlowError) -> Self {
        Failure::new(flow_code(&e), e)
    }
}

impl From<BuildError> for Failure {
    fn from(e: BuildError) -> Self {
        let code = match &e {
            BuildError::MissingFlow { .. } => EXIT_MISSING_FLOW,
            BuildError::Flow(f) => flow_code(f),
            _ => EXIT_INPUT,
        };
        Failure::new(code, e)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Build(b) => b.into(),
            PipelineError::Flow(f) => f.into(),
            PipelineError::Config(_) => Failure::new(EXIT_INPUT, e),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        let code = match e {
            IoError::Io(_) => EXIT_OTHER,
            _ => EXIT_INPUT,
        };
        Failure::new(code, e)
    }
}

impl From<EntropyError> for Failure {
    fn from(e: EntropyError) -> Self {
        Failure::new(EXIT_INPUT, e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(EXIT_OTHER, e)
    }
}

impl From<image::ImageError> for Failure {
    fn from(e: image::ImageError) -> Self {
        Failure::new(EXIT_OTHER, e)
    }
}

impl From<rayon::ThreadPoolBuildError> for Failure {
    fn from(e: rayon::ThreadPoolBuildError) -> Self {
        Failure::new(EXIT_OTHER, e)
    }
}
