use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("bound regression: {0}")]
    Regression(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Regression(_) => 1,
            CliError::Config { .. } | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<pricing_lab::Error> for CliError {
    fn from(e: pricing_lab::Error) -> Self {
        use pricing_lab::Error::*;
        match e {
            Numerical(_) | Invariant(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config {
                path: String::new(),
                msg: e.to_string(),
            },
        }
    }
}
