use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    /// A computation ran but did not produce an acceptable result.
    #[error("{0}")]
    Failure(String),

    #[error(transparent)]
    Core(#[from] pcap_core::Error),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_configuration() => 2,
            CliError::Core(_) | CliError::Failure(_) | CliError::Io(_) => 1,
        }
    }
}
