use mexec_core::ExecError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("assumption audit failed: {0} (rerun with --force to override)")]
    Audit(String),
    #[error("{0}")]
    Singular(ExecError),
    #[error("scenario error: {0}")]
    Schema(String),
    #[error("{0}")]
    Exec(ExecError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Csv(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Audit(_) => 2,
            CliError::Singular(_) => 3,
            CliError::Schema(_) => 4,
            _ => 1,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

impl From<ExecError> for CliError {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::SingularDriver { .. } => CliError::Singular(e),
            ExecError::InvalidSpec(msg) => CliError::Schema(msg),
            e => CliError::Exec(e),
        }
    }
}
