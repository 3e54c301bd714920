use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("unknown preset `{0}` (expected d1, d2, d3, d4 or custom)")]
    UnknownPreset(String),

    #[error("invalid parameters: {0}")]
    Invalid(nfad_core::Error),

    #[error("simulation failed: {0}")]
    Simulation(nfad_core::Error),

    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl CliError {
    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Config(_) => 2,
            CliError::UnknownPreset(_) => 3,
            CliError::Invalid(_) => 4,
            CliError::Io { .. } => 5,
            CliError::Simulation(e) => match e {
                nfad_core::Error::Io(_) => 5,
                _ => 1,
            },
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }
}

impl From<nfad_core::Error> for CliError {
    fn from(e: nfad_core::Error) -> Self {
        use nfad_core::Error as E;
        match e {
            E::InvalidParameter { .. } | E::NegativeBias(_) | E::InvalidScenario(_) | E::InvalidPlan(_) => {
                CliError::Invalid(e)
            }
            other => CliError::Simulation(other),
        }
    }
}
