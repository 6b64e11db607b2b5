use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: field `{field}`: {message}")]
    Field {
        line: usize,
        field: String,
        message: String,
    },

    #[error("unknown {kind} token `{token}`; allowed: {}", allowed.join(", "))]
    UnknownToken {
        kind: &'static str,
        token: String,
        allowed: Vec<&'static str>,
    },

    #[error("line {line}: duplicate record for (user_id={user_id}, clicked_at={clicked_at}, notif_app={notif_app})")]
    Duplicate {
        line: usize,
        user_id: String,
        clicked_at: i64,
        notif_app: String,
    },

    #[error("schema: {0}")]
    Schema(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mixed model did not converge after {iterations} iterations (variance ratio bracket [{lo:.3e}, {hi:.3e}])")]
    NoConvergence { iterations: usize, lo: f64, hi: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn field(line: usize, field: &str, message: impl Into<String>) -> Self {
        Error::Field {
            line,
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
