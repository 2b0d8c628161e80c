use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model document or series definition is malformed.
    #[error("invalid field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("period mismatch in `{field}`: series period {found} differs from model period {expected}")]
    PeriodMismatch { field: String, expected: f64, found: f64 },

    #[error("could not parse model document: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("step budget of {steps} exhausted at t = {t}")]
    TooManySteps { steps: usize, t: f64 },

    #[error("time {t} outside trajectory span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// 1 is a Floquet multiplier: the shooting Jacobian DP - I is singular.
    #[error("degenerate orbit: shooting Jacobian is singular (det = {det:e})")]
    SingularJacobian { det: f64 },

    #[error("Newton shooting did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Poincare iterates diverge from the orbit after {retries} retries")]
    Diverged { retries: usize },

    #[error("only {found} iterates fell in the regression window, need at least {needed}")]
    TooFewPoints { found: usize, needed: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by user input (bad documents, arguments) as
    /// opposed to a failed analysis.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::PeriodMismatch { .. }
                | Error::Parse(_)
                | Error::InvalidArgument(_)
                | Error::Io(_)
        )
    }
}
