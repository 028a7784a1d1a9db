use std::path::PathBuf;

use crate::laws::LawId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },

    #[error("row {row}: duplicate observation key (first seen at row {first_row})")]
    DuplicateKey { row: usize, first_row: usize },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("{0}: empty observation set")]
    EmptySet(&'static str),

    #[error("observation {index} has no perturbation level for the selected level key")]
    MissingLevel { index: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("law {law} requires x_level on every observation (missing column `x_level`)")]
    MissingX { law: LawId },

    #[error("need at least {needed} observations to fit {law}, got {got}")]
    InsufficientObservations { law: LawId, needed: usize, got: usize },

    #[error("every start diverged (non-finite SSE) while fitting {0}")]
    AllStartsDiverged(LawId),

    #[error("undefined variance: all observed values are equal")]
    UndefinedVariance,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unsatisfiable split: {0}")]
    UnsatisfiableSplit(String),

    #[error("law {0} is not a shannon variant")]
    WrongLawFamily(LawId),

    #[error("signal power is zero; SNR is undefined")]
    ZeroSignalPower,

    #[error("vectors are identical; SNR is infinite")]
    InfiniteSnr,

    #[error("weight file: {0}")]
    WeightFormat(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors that come from the numerics rather than from malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::AllStartsDiverged(_)
                | Error::UndefinedVariance
                | Error::NonFinite(_)
                | Error::InfiniteSnr
                | Error::ZeroSignalPower
        )
    }
}
