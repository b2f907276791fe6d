use std::fmt;
use std::path::Path;
use std::process::ExitCode;

/// A failure classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Parse(String),
    Convergence(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Parse(_) => 4,
            CliError::Convergence(_) => 5,
            CliError::Internal(_) => 1,
        })
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Convergence(m) => write!(f, "convergence failure: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<phasefolio::Error> for CliError {
    fn from(e: phasefolio::Error) -> Self {
        use phasefolio::Error as E;
        match e {
            E::Parse { .. } => CliError::Parse(e.to_string()),
            E::Convergence { .. } => CliError::Convergence(e.to_string()),
            E::Contract(_) | E::Indefinite(_) | E::DegenerateDenominator(_) => {
                CliError::Internal(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
