use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("evaluation failed at {point}: {reason}")]
    Evaluation { point: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error(
        "regression matrix numerically singular at step {step} (condition number {condition:e})"
    )]
    SingularRegression { step: usize, condition: f64 },

    #[error("Picard iteration did not converge at step {step}; residual history {residuals:?}")]
    PicardDivergence { step: usize, residuals: Vec<f64> },

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("inf-convolution spec error: {0}")]
    Spec(String),

    #[error(
        "lattice refinement did not converge after {rounds} rounds (last change {last_change:e})"
    )]
    Refinement { rounds: usize, last_change: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file: {0}")]
    Format(String),
}

impl LabError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
