use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension error in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("numeric error in {op}: {msg}")]
    Numeric { op: &'static str, msg: String },
    #[error("index {index} out of range 0..{len}")]
    Index { index: usize, len: usize },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("unknown vocabulary word {0:?}")]
    Vocabulary(String),
    #[error("ambiguous reference: {0} candidate cells")]
    Ambiguity(usize),
    #[error("cannot resolve reference: {0}")]
    Resolution(String),
    #[error("dialog generation failed after {0} rejections")]
    Generation(usize),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
