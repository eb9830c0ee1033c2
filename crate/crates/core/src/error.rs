use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown input format `{0}` (supported: events-v1)")]
    UnknownFormat(String),

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("no tokens were ingested; word vocabularies need token data")]
    NoTokens,

    #[error("token `{token}` has zero probability under the model for {community} {month}")]
    ZeroProbability {
        token: String,
        community: String,
        month: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training labels contain a single class")]
    SingleClass,

    #[error("not enough users: need {needed}, have {available}")]
    InsufficientUsers { needed: usize, available: usize },

    #[error("infeasible synthetic population: {0}")]
    InfeasibleSpec(String),

    #[error("orientation bits are not randomized ({positives} of {total} set)")]
    OrientationNotRandomized { positives: usize, total: usize },
}
