use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid, dimension {dim}: {rule}")]
    Validation { dim: usize, rule: String },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("copulas are defined on different grids")]
    GridMismatch,

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("epsilon {epsilon} outside the valid interval [{lo}, {hi}]")]
    EpsilonOutOfRange { epsilon: f64, lo: f64, hi: f64 },

    #[error("grid admits no rectangle exchange (needs two dimensions with at least two intervals)")]
    DegenerateGrid,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("weight matrix row {0} sums to zero")]
    SingularWeights(usize),

    #[error("chain holds no samples")]
    EmptyChain,

    #[error("invalid copula: {0}")]
    InvalidCopula(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
}

impl Error {
    pub(crate) fn validation(dim: usize, rule: impl Into<String>) -> Self {
        Error::Validation { dim, rule: rule.into() }
    }

    /// Process exit status for the command-line tool: 2 for configuration,
    /// 3 for input data and files, 4 for everything raised while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Format { .. } | Error::Io { .. } | Error::InvalidCopula(_) => 3,
            _ => 4,
        }
    }

    /// Re-labels an error raised while interpreting configuration.
    pub fn into_config(self, field: &str) -> Self {
        match self {
            Error::Config(_) => self,
            other => Error::Config(format!("{field}: {other}")),
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), msg: err.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
