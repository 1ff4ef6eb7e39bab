use alloc::string::String;

/// Errors produced by the estimation core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch in {op}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    /// A loss or gradient became NaN or infinite.
    #[error("numerical divergence in `{param}`{}", iteration.map(|i| alloc::format!(" at iteration {i}")).unwrap_or_default())]
    Divergence {
        param: String,
        iteration: Option<usize>,
    },

    #[error("matrix is numerically singular (condition number {condition:e})")]
    Singular { condition: f64 },

    #[error("transition matrix is unstable (spectral radius {spectral_radius})")]
    Unstable { spectral_radius: f64 },

    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Attach an iteration index to a divergence error.
    pub fn at_iteration(self, iter: usize) -> Self {
        match self {
            Error::Divergence { param, .. } => Error::Divergence {
                param,
                iteration: Some(iter),
            },
            other => other,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
