use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum EvoError {
    #[error("incompatible grids: {0}")]
    IncompatibleGrid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("point z = {re}{im:+}i lies outside the analyticity disk B(r, r) with r = {radius}")]
    OutsideDisk { re: f64, im: f64, radius: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("ill-posed system: bin matrix is singular at tau = {tau}")]
    IllPosed { tau: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, EvoError>;
