use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("source not resolved by the grid: spectral tail ratio {ratio:.3e} exceeds {limit:.1e}")]
    Resolution { ratio: f64, limit: f64 },

    #[error("coefficients are not conjugate-symmetric (residual {residual:.3e})")]
    SymmetryViolation { residual: f64 },

    #[error("time window error: {0}")]
    Window(String),

    #[error("field persists after the Huygens cutoff: tail ratio {ratio:.3e} exceeds {tolerance:.1e}")]
    Huygens { ratio: f64, tolerance: f64 },

    #[error("horizon error: {0}")]
    Horizon(String),

    #[error("dispersion relation violated: {0}")]
    Dispersion(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("at lambda = {lambda}: {source}")]
    AtLambda {
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidInput(_)
            | Error::Geometry(_)
            | Error::Configuration(_)
            | Error::Domain(_)
            | Error::Json(_)
            | Error::Format { .. } => true,
            Error::AtLambda { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
