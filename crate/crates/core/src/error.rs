use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("xml dump: {0}")]
    Xml(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("knowledge base: {0}")]
    Kb(String),

    #[error("prediction for {listing_id}/{chunk_index} has {labels} labels but the chunk has {tokens} tokens")]
    Misaligned {
        listing_id: String,
        chunk_index: usize,
        tokens: usize,
        labels: usize,
    },

    #[error("missing prediction for chunk {listing_id}/{chunk_index}")]
    MissingPrediction {
        listing_id: String,
        chunk_index: usize,
    },

    #[error("more than one {side} mention for item {item_index} of {listing_id}")]
    DuplicateMention {
        side: &'static str,
        listing_id: String,
        item_index: usize,
    },

    #[error("no positive listing can donate a context for negative sampling")]
    NoEligibleDonor,

    #[error("cannot split {pages} pages into {partitions} partitions")]
    TooFewPages { pages: usize, partitions: usize },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
