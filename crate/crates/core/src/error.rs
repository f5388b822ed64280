use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    Dimension {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid Grassmann point: {0}")]
    InvalidPoint(String),

    /// A tangent-space precondition did not hold (non-horizontal input,
    /// mismatched base points, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// `baseᵀ·target` is (numerically) singular, so the target lies on the
    /// cut locus of the base and the logarithm is undefined.
    #[error("target on the cut locus of the base point (smallest singular value {min_singular_value:.3e})")]
    CutLocus { min_singular_value: f64 },

    #[error("singular value decomposition failed to converge")]
    SvdFailed,

    #[error("empty sample batch")]
    EmptyBatch,

    #[error("sample index {index} out of range for {n_samples} samples")]
    IndexOutOfRange { index: usize, n_samples: usize },

    #[error("sample {index}: {source}")]
    AtSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("run aborted at epoch {epoch}, inner iteration {iteration}: {source}")]
    RunAborted {
        epoch: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("divergence at epoch {epoch} (step size {eta:e}): non-finite iterate or cost")]
    Divergence { epoch: usize, eta: f64 },

    #[error("line search stalled at iteration {iteration} after {halvings} halvings (gradient norm {grad_norm:.3e})")]
    LineSearchStalled {
        iteration: usize,
        halvings: usize,
        grad_norm: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_sample(self, index: usize) -> Self {
        Error::AtSample {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn aborted(self, epoch: usize, iteration: usize) -> Self {
        match self {
            e @ (Error::RunAborted { .. } | Error::Divergence { .. }) => e,
            e => Error::RunAborted {
                epoch,
                iteration,
                source: Box::new(e),
            },
        }
    }
}
