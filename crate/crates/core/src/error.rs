use thiserror::Error;

/// Errors raised by the simulation and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A value failed validation; `key` names the offending field.
    #[error("invalid {key}: {reason}")]
    Invalid { key: String, reason: String },

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("zero open-beam counts at detector {detector}; cannot normalize")]
    ZeroOpenBeam { detector: usize },

    #[error("offset s = {s} cm lies outside the fan support (|s| must be < {limit} cm)")]
    OutsideFan { s: f64, limit: f64 },

    #[error("need at least {needed} {what}, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("reconstruction maximum is not positive ({nmax}) for filter {code}")]
    NonPositiveMax { code: String, nmax: f64 },

    #[error("sample variance is zero; statistic undefined")]
    ZeroVariance,

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("unknown filter code `{code}` (valid codes: {valid})")]
    UnknownFilter { code: String, valid: String },

    /// Malformed file or config text; `key` names the missing or bad entry.
    #[error("parse error in {source_name}: {key}: {reason}")]
    Parse {
        source_name: String,
        key: String,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(
        source_name: impl Into<String>,
        key: impl Into<String>,
        reason: impl Into<String>,
    ) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            key: key.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
