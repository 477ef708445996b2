use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A cell could not be parsed. `row` is the 1-based line number in the
    /// source file (the header is line 1).
    #[error("line {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{rows} rows cannot satisfy k = {k}")]
    TooFewRows { rows: usize, k: usize },

    #[error("only {found} distinct class values, l = {l} required")]
    InsufficientDiversity { found: usize, l: usize },

    #[error("feature {0} is already assigned to a fragment")]
    AlreadyAssigned(usize),

    #[error("fragmentation is invalid: {0}")]
    InvalidFragmentation(String),

    #[error("equivalence classes share no class value; selectivity is undefined")]
    NoSharedClass,

    #[error("version count exceeds 128-bit range")]
    CountOverflow,

    #[error("enforcement did not converge in dependency-graph component {component}")]
    EnforcementStuck { component: usize },

    #[error("subject matches {matches} equivalence classes in fragment {fragment}")]
    AmbiguousMatch { fragment: usize, matches: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("malformed publication: {0}")]
    Publication(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
