use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the support or domain an operation accepts.
    #[error("domain error: {0}")]
    Domain(String),

    /// A requested object would be too large to represent.
    #[error("size error: {0}")]
    Size(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Integration produced a non-finite state.
    #[error("integration diverged at t = {time}")]
    Divergence { time: f64 },

    /// Malformed or inconsistent input data (covariances, samples, files).
    #[error("data error: {0}")]
    Data(String),

    /// The output has (numerically) zero variance, so a normalized index is undefined.
    #[error("zero total variance: normalization undefined")]
    ZeroVariance,

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A black-box simulation failed for one parameter sample.
    #[error("simulation failed for sample {sample}: {source}")]
    Simulation {
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
