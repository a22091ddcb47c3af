use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Validation failure pointing at a config line; line 0 means the file
    /// as a whole.
    #[error("config line {line}{}: {msg}", key.as_ref().map(|k| format!(", key `{k}`")).unwrap_or_default())]
    Config {
        line: usize,
        key: Option<String>,
        msg: String,
    },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] dilatlab::Error),

    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
