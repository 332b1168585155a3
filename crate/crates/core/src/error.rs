use alloc::string::String;

use crate::data::{QueryPart, Split};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty training split")]
    EmptyTrainingSplit,
    #[error("empty {0} split")]
    EmptySplit(Split),
    #[error("duplicate training triple ({head}, {relation}, {tail})")]
    DuplicateTriple {
        head: String,
        relation: String,
        tail: String,
    },
    #[error("{what} {name:?} is not in the dictionary")]
    UnknownName { what: &'static str, name: String },
    #[error("id {id} out of range for a vocabulary of {len}")]
    IdOutOfRange { id: u32, len: usize },
    #[error("no frequency recorded for key ({0}, {1})")]
    UnknownKey(u32, u32),
    #[error("invalid subsampling exponent {0}; expected a value in (0, 1]")]
    InvalidExponent(f64),
    #[error("embedding dimension must be positive")]
    ZeroDimension,
    #[error("{model} needs an even dimension, got {dim}")]
    OddDimension { model: &'static str, dim: usize },
    #[error("invalid init range {0}")]
    InvalidInitRange(f64),
    #[error("at least two entities are required for negative sampling")]
    TooFewEntities,
    #[error("number of negatives must be at least 1")]
    ZeroNegatives,
    #[error("cannot filter false negatives: every entity answers {0:?}")]
    FilteringImpossible(QueryPart),
    #[error("inner weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("no queries to evaluate")]
    NoQueries,
    #[error("empty batch")]
    EmptyBatch,
    #[error("distribution is not normalized (total {0})")]
    NotNormalized(f64),
    #[error("negative probability {0}")]
    NegativeProbability(f64),
    #[error("weights undefined: observed probability is zero at cell ({x}, {y}) where the true probability is positive")]
    WeightsUndefined { x: usize, y: usize },
    #[error("sample schedule needs at least 3 points, got {0}")]
    ScheduleTooShort(usize),
    #[error("invalid {what}: {value}")]
    InvalidParameter { what: &'static str, value: f64 },
}
