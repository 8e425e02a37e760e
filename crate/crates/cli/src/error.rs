use std::fmt;

/// A failed command, carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// A self-check such as gradcheck found a mismatch.
    Check(String),
    Usage(String),
    Divergence(String),
    /// `--assert` was given and an acceptance check failed.
    Assertion(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) | CliError::Internal(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Assertion(_) => 4,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Check(m) | CliError::Usage(m) | CliError::Divergence(m) | CliError::Internal(m) => f.write_str(m),
            CliError::Assertion(m) => write!(f, "acceptance check failed: {m}"),
        }
    }
}

impl From<ddjscc_core::Error> for CliError {
    fn from(e: ddjscc_core::Error) -> Self {
        use ddjscc_core::Error;
        match e {
            Error::Divergence { .. } => CliError::Divergence(e.to_string()),
            Error::Degenerate(_) => CliError::Internal(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}
