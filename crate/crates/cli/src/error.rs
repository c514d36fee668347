use thiserror::Error;

/// Failures of a CLI run, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("reliability error: {0}")]
    Reliability(String),
    #[error("join mismatch: {0}")]
    JoinMismatch(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Reliability(_) => 3,
            CliError::JoinMismatch(_) => 4,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Library errors keep their category: reliability problems abort with the
/// reliability code, everything else is a runtime failure.
impl From<wigner_airy::Error> for CliError {
    fn from(e: wigner_airy::Error) -> Self {
        match e {
            wigner_airy::Error::Reliability(_) => CliError::Reliability(e.to_string()),
            wigner_airy::Error::Input(_)
            | wigner_airy::Error::UnsupportedPotential(_)
            | wigner_airy::Error::Convention(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}
