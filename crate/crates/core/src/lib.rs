//! Relative-error quantile sketch.
//!
//! A [`Sketch`] summarizes a stream of totally ordered items and answers rank
//! queries with multiplicative error: for a fixed query `y` the estimate
//! `R̂(y)` satisfies `|R̂(y) − R(y)| ≤ ε·R(y)` with probability at least
//! `1 − δ`. Low ranks are therefore answered far more precisely than high
//! ones, and the smallest items are kept exactly.
//!
//! The sketch is a cascade of relative-compactors. Each compactor protects
//! the smaller half of its buffer and compacts a suffix of the larger half
//! whose length follows a derandomized exponential schedule driven by a
//! per-level state counter. Sketches built in [`Mode::Mergeable`] can be
//! combined along any merge tree without knowing the total input size.
//!
//! ```
//! use relq::{Params, Sketch};
//!
//! let params = Params::mergeable(0.05, 0.01).unwrap();
//! let mut sketch = Sketch::new(params, 7);
//! for i in 1..=10_000 {
//!     sketch.update(i as f64).unwrap();
//! }
//! // Ranks below half a buffer are exact.
//! assert_eq!(sketch.rank(&100.0), 100);
//! ```

pub mod cli;
pub mod codec;
pub mod compactor;
mod error;
pub mod merge;
pub mod order;
pub mod params;
mod rng;
pub mod sketch;
pub mod verify;

pub use compactor::{trailing_ones, Capacity, CoinSource, CompactorState, Parity};
pub use error::{Error, InvariantViolation, MergeError};
pub use merge::{merge, merge_with_stats, MergeStats};
pub use order::{F64Order, ItemOrder, NaturalOrder, Reversed};
pub use params::{all_quantiles_adjust, Mode, ParamError, Params};
pub use rng::{Coins, RNG_CHACHA8};
pub use sketch::{CompactionEvent, CompactionKind, Sketch};
