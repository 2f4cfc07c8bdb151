//! Error type shared by every module in the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two operands (or an operand and a layer boundary) disagree on dimensions.
    #[error("{op}: shape mismatch ({left} vs {right})")]
    ShapeMismatch {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Syntactically fine input that is numerically unusable: a zero-norm
    /// vector where a direction is required, constant data asked to be
    /// normalized, and the like.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Malformed binary or CSV input. `offset` is the byte position the
    /// reader had reached when it gave up.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    /// Training blew up. Carries enough context to point at the culprit.
    #[error("non-finite loss at epoch {epoch}, batch {batch} ({layer})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        layer: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: impl Into<String>, right: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            left: left.into(),
            right: right.into(),
        }
    }
}
