use modsensor_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config or input files.
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    /// 1 for validation problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Core(e) if e.is_validation() || matches!(e, CoreError::ZeroVisibility(_)) => 1,
            CliError::Core(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
