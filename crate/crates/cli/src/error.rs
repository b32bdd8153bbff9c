use balcharge_core::nmpc::NmpcError;
use balcharge_core::protocols::ProtocolError;
use balcharge_core::simulator::SimFailure;
use balcharge_core::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad scenario or settings.
    #[error("{0}")]
    Config(String),
    /// The model left its validity envelope during a run.
    #[error("{0}")]
    Validity(String),
    #[error("{0}")]
    Solver(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Validity(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Io { .. } => 1,
        }
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        if e.is_validity_violation() {
            CliError::Validity(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<SimFailure> for CliError {
    fn from(f: SimFailure) -> Self {
        if f.error.is_validity_violation() {
            CliError::Validity(f.to_string())
        } else {
            CliError::Config(f.to_string())
        }
    }
}

impl From<Box<SimFailure>> for CliError {
    fn from(f: Box<SimFailure>) -> Self {
        (*f).into()
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Config(m) => CliError::Config(m),
            ProtocolError::Simulation(f) => f.into(),
            e @ ProtocolError::NoBracket { .. } => CliError::Solver(e.to_string()),
        }
    }
}

impl From<NmpcError> for CliError {
    fn from(e: NmpcError) -> Self {
        match e {
            NmpcError::Config(_) | NmpcError::TargetBelowSoc { .. } => CliError::Config(e.to_string()),
            NmpcError::NoValidGuess(_) => CliError::Solver(e.to_string()),
            NmpcError::Model(m) => m.into(),
            NmpcError::Simulation(f) => f.into(),
        }
    }
}
