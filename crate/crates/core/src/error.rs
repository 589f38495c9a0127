use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// The variants are grouped by how a caller is expected to react: the
/// `Invalid*`/`Coverage`/`Configuration` family means the inputs are wrong,
/// the `Numerical`/`NonConvergence` family means the inputs were fine but a
/// solver gave up.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("meshing failed: {0}")]
    Meshing(String),

    #[error("assembly failed: {0}")]
    Assembly(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("solver did not converge after {iterations} iterations: {message}")]
    NonConvergence {
        iterations: usize,
        message: String,
        /// Best parameter vector seen before giving up, when there is one.
        best: Option<Vec<f64>>,
    },

    #[error("symmetry classification unsupported: {0}")]
    ClassificationUnsupported(String),

    #[error("band coverage insufficient: {0}")]
    Coverage(String),

    #[error("sampling too coarse: {0}")]
    Resolution(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("extraction failed: {0}")]
    Extraction(String),
}

impl Error {
    /// True for errors caused by bad inputs rather than by a failing solver.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::Configuration(_)
                | Error::Coverage(_)
                | Error::Resolution(_)
                | Error::ClassificationUnsupported(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
