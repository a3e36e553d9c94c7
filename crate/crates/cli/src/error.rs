use std::fmt;
use std::process::ExitCode;

use scenelabel::eval::EvalError;
use scenelabel::fusion::FusionError;
use scenelabel::io::IoError;
use scenelabel::labeler::LabelError;
use scenelabel::registration::AlignError;
use scenelabel::session::SessionError;
use scenelabel::synth::SynthError;

/// A failed command: exit code 2 for bad input, 1 for everything else.
#[derive(Debug)]
pub struct CliError {
    pub class: &'static str,
    pub message: String,
    pub user_error: bool,
}

impl CliError {
    pub fn user(class: &'static str, message: impl Into<String>) -> Self {
        Self {
            class,
            message: message.into(),
            user_error: true,
        }
    }

    pub fn internal(class: &'static str, message: impl Into<String>) -> Self {
        Self {
            class,
            message: message.into(),
            user_error: false,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(if self.user_error { 2 } else { 1 })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.class, self.message)
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match &e {
            IoError::Io { .. } if e.is_not_found() => Self::user("missing-input", e.to_string()),
            IoError::Format(..) => Self::user("invalid-input", e.to_string()),
            _ => Self::internal("io-error", e.to_string()),
        }
    }
}

impl From<LabelError> for CliError {
    fn from(e: LabelError) -> Self {
        match e {
            LabelError::Io(io) => io.into(),
            other => Self::user(other.class(), other.to_string()),
        }
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Io(io) => io.into(),
            SessionError::Label(l) => l.into(),
            other => Self::user(other.class(), other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io(io) => io.into(),
            SynthError::Label(l) => l.into(),
            other => Self::user(other.class(), other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(io) => io.into(),
            other => Self::user(other.class(), other.to_string()),
        }
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        Self::user(e.class(), e.to_string())
    }
}

impl From<AlignError> for CliError {
    fn from(e: AlignError) -> Self {
        Self::user(e.class(), e.to_string())
    }
}
