use std::fmt;
use std::process::ExitCode;

use qreadout::Error;

/// A command failure, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Numerical(_) => 4,
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => f.write_str(m),
        }
    }
}

/// True for failures that end one table cell rather than the whole run.
pub fn is_numerical(e: &Error) -> bool {
    matches!(
        e,
        Error::IntegrationDiverged { .. }
            | Error::SingularCovariance { .. }
            | Error::DegenerateKernel(_)
            | Error::Convergence { .. }
            | Error::FitFailed(_)
    )
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidArgument(_) | Error::InvalidSpec(_) => Failure::Usage(msg),
            ref n if is_numerical(n) => Failure::Numerical(msg),
            _ => Failure::Data(msg),
        }
    }
}

/// Short text for a failed table cell.
pub fn cell_text(e: &Error) -> String {
    match e {
        Error::SingularCovariance { .. } => "error: singular covariance".into(),
        Error::Convergence { .. } => "error: svm did not converge".into(),
        other => format!("error: {other}"),
    }
}
