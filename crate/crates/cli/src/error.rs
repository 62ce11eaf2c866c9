use thiserror::Error;

/// Harness failures, split by the exit code they map to.
#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad configuration, unreadable input, or an unwritable output.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical fault: {0}")]
    Numerical(neyman_core::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Numerical(_) => 2,
        }
    }
}

impl From<neyman_core::Error> for HarnessError {
    fn from(e: neyman_core::Error) -> Self {
        use neyman_core::Error as E;
        match e {
            E::ParseError { .. } | E::Io(_) | E::InvalidConfig(_) | E::TOdd(_) => HarnessError::Config(e.to_string()),
            other => HarnessError::Numerical(other),
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(HarnessError::Config(msg.into()))
}
