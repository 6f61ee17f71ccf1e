use thiserror::Error;

use crate::params::{Mode, ParamError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("item rejected by the sketch's order (NaN or otherwise unordered)")]
    InvalidItem,
    #[error("stream length {n} exceeds the declared bound {bound} for {mode:?} mode")]
    BoundExceeded { n: u64, bound: u64, mode: Mode },
    #[error("query on an empty sketch")]
    EmptySketch,
    #[error("rank {rank} is outside [1, {n}]")]
    RankOutOfRange { rank: u64, n: u64 },
    #[error(transparent)]
    Merge(#[from] MergeError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MergeError {
    #[error("only mergeable-mode sketches can be merged, got {0:?}")]
    NotMergeable(Mode),
    #[error("sketches were built with different accuracy parameters (k_hat {0} vs {1})")]
    KHatMismatch(String, String),
    #[error("sketches use different item orders")]
    OrderMismatch,
    #[error("combined stream length overflows u64")]
    LengthOverflow,
}

/// A broken structural invariant, reported by [`crate::Sketch::check_invariants`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvariantViolation {
    #[error("level {level} holds {len} items, capacity is {cap}")]
    Overfull { level: usize, len: usize, cap: usize },
    #[error("level {level} has sigma {sigma} > N/k = {limit}")]
    Sigma { level: usize, sigma: u64, limit: u64 },
    #[error("level {level} buffer is not sorted")]
    Unsorted { level: usize },
    #[error("n = {n} exceeds N = {bound}")]
    LengthBound { n: u64, bound: u64 },
    #[error("{levels} levels exceed the bound {limit} for n = {n}")]
    TooManyLevels { levels: usize, limit: usize, n: u64 },
    #[error("level {level} holds an item rejected by the order")]
    InvalidItem { level: usize },
}
