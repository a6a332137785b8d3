use thiserror::Error;

/// Errors shared by the channel, link and relay-side routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("link {link} has a zero relay-destination gain; no finite relay power matches its source power")]
    DegenerateChannel { link: usize },

    #[error("link {link} has a zero gain; the high-SNR approximation is undefined")]
    ZeroGain { link: usize },

    #[error("water-filling needs at least one positive gain")]
    AllZeroGains,

    #[error("exhaustive selection supports at most {max} links, got {n}")]
    TooManyLinks { n: usize, max: usize },

    #[error("malformed record on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
