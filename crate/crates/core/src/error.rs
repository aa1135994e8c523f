use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the numerical kernels and decoders.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("matrix is rank deficient: pivot {pivot:e} in column {column} is below tolerance")]
    RankDeficient { column: usize, pivot: f64 },

    #[error("matrix is singular: pivot {pivot:e} in column {column} is below tolerance")]
    Singular { column: usize, pivot: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("search space of {leaves:e} leaves exceeds the brute-force cap of {cap}")]
    CapExceeded { leaves: f64, cap: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A campaign setting is missing or malformed; `line` is set when it came
    /// from a configuration file.
    #[error("{}{field}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        field: String,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            line: None,
            field: field.to_string(),
            message: message.into(),
        }
    }
}
