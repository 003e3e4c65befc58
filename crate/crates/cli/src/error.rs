use std::fmt;

/// Process exit statuses. Clap already exits with 2 on bad flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Usage = 2,
    Data = 3,
    BelowThreshold = 4,
    Io = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(exit: Exit, error: impl Into<anyhow::Error>) -> Self {
        CliError {
            exit,
            error: error.into(),
        }
    }

    pub fn msg(exit: Exit, message: impl fmt::Display) -> Self {
        CliError {
            exit,
            error: anyhow::anyhow!("{message}"),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub trait OrExit<T> {
    fn or_exit(self, exit: Exit) -> CliResult<T>;
    fn or_exit_with(self, exit: Exit, context: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, exit: Exit) -> CliResult<T> {
        self.map_err(|e| CliError::new(exit, e))
    }

    fn or_exit_with(self, exit: Exit, context: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|e| CliError::new(exit, e.into().context(context())))
    }
}
