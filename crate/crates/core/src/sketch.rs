//! The full sketch: a cascade of relative-compactors.
//!
//! Level `h` stores items of weight `2^h`. Items promoted by a compaction
//! at level `h` are inserted one by one into level `h + 1`, which is
//! opened the first time level `h` compacts. The rank estimate of `y` is
//! the total weight of stored items `≤ y`.

use std::cmp::Ordering;

use crate::compactor::{CompactorState, Parity};
use crate::error::{Error, InvariantViolation};
use crate::merge::MergeStats;
use crate::order::{F64Order, ItemOrder};
use crate::params::{Mode, Params};
use crate::rng::Coins;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompactionKind {
    /// Compaction of a full buffer from `S = B − L + 1`.
    Scheduled,
    /// Shrinks a level to `B/2` items before the parameters grow.
    Special,
}

/// One compaction, as recorded when tracing is enabled.
#[derive(Debug, Clone)]
pub struct CompactionEvent<T> {
    pub level: usize,
    pub kind: CompactionKind,
    /// The removed range, sorted.
    pub removed: Vec<T>,
    pub coin: Parity,
}

impl<T: Clone> CompactionEvent<T> {
    pub fn promoted(&self) -> impl Iterator<Item = &T> {
        let skip = usize::from(self.coin == Parity::Even);
        self.removed.iter().skip(skip).step_by(2)
    }
}

#[derive(Debug, Clone)]
pub struct Sketch<T = f64, O = F64Order> {
    pub(crate) params: Params,
    pub(crate) levels: Vec<CompactorState<T>>,
    pub(crate) n: u64,
    pub(crate) coins: Coins,
    pub(crate) order: O,
    pub(crate) trace: Option<Vec<CompactionEvent<T>>>,
}

impl Sketch<f64, F64Order> {
    /// An empty `f64` sketch whose coins are drawn from `seed`.
    pub fn new(params: Params, seed: u64) -> Self {
        Self::with_order(params, seed, F64Order)
    }

    /// Derives parameters for `mode` and builds an empty `f64` sketch.
    /// `n` is the stream length bound for the known-length modes.
    pub fn with_mode(mode: Mode, eps: f64, delta: f64, n: Option<u64>, seed: u64) -> Result<Self, Error> {
        Ok(Self::new(Params::derive(mode, eps, delta, n)?, seed))
    }
}

impl<T: Clone, O: ItemOrder<T>> Sketch<T, O> {
    pub fn with_order(params: Params, seed: u64, order: O) -> Self {
        Self { params, levels: vec![CompactorState::new(0)], n: 0, coins: Coins::new(seed), order, trace: None }
    }

    pub(crate) fn from_raw_parts(params: Params, levels: Vec<CompactorState<T>>, n: u64, coins: Coins, order: O) -> Self {
        Self { params, levels, n, coins, order, trace: None }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Number of items ingested.
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Index of the highest level, `H`.
    pub fn height(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn levels(&self) -> &[CompactorState<T>] {
        &self.levels
    }

    pub fn order(&self) -> &O {
        &self.order
    }

    pub fn seed(&self) -> u64 {
        self.coins.seed()
    }

    /// Coins drawn so far; together with the seed this pins the generator.
    pub fn coins_consumed(&self) -> u64 {
        self.coins.consumed()
    }

    /// Total number of items held across all levels.
    pub fn stored_items(&self) -> usize {
        self.levels.iter().map(CompactorState::len).sum()
    }

    /// Starts recording every compaction. Used by the verification harness.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<CompactionEvent<T>> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Adds one item.
    ///
    /// In mergeable mode, an update that would push `n` past the current
    /// bound `N` first shrinks every level with a special compaction and
    /// squares `N`. The known-length modes reject such an update.
    pub fn update(&mut self, item: T) -> Result<(), Error> {
        if !self.order.accepts(&item) {
            return Err(Error::InvalidItem);
        }
        if self.n >= self.params.bound() {
            match self.params.mode() {
                Mode::Mergeable => self.grow_bound(&mut MergeStats::default()),
                mode => return Err(Error::BoundExceeded { n: self.n + 1, bound: self.params.bound(), mode }),
            }
        }
        self.n += 1;
        self.insert_at(0, item);
        Ok(())
    }

    pub fn extend_from<I: IntoIterator<Item = T>>(&mut self, items: I) -> Result<(), Error> {
        items.into_iter().try_for_each(|x| self.update(x))
    }

    fn insert_at(&mut self, h: usize, item: T) {
        if h == self.levels.len() {
            self.levels.push(CompactorState::new(h));
        }
        let cap = self.params.capacity();
        let level = &mut self.levels[h];
        let promoted = if level.len() >= cap.b {
            let (removed, promoted, coin) = level.compact_scheduled(cap, &self.order, &mut self.coins);
            if let Some(trace) = &mut self.trace {
                trace.push(CompactionEvent { level: h, kind: CompactionKind::Scheduled, removed, coin });
            }
            promoted
        } else {
            Vec::new()
        };
        level.push(item);
        for z in promoted {
            self.insert_at(h + 1, z);
        }
    }

    /// Special compactions, `N ← N²` and a scheduled pass for any level
    /// left at or above the new capacity.
    pub(crate) fn grow_bound(&mut self, stats: &mut MergeStats) {
        self.special_compactions_inner(stats);
        self.params = self.params.grow().expect("mergeable parameters always grow");
        self.scheduled_pass(stats);
    }

    /// Shrinks every level below the top to at most `B/2` items by
    /// compacting from position `B/2 + 1`. Levels already at or below
    /// `B/2` are left alone and keep their schedule state.
    pub fn special_compactions(&mut self) -> Result<(), Error> {
        if self.params.mode() != Mode::Mergeable {
            return Err(crate::params::ParamError::WrongMode { expected: Mode::Mergeable, actual: self.params.mode() }.into());
        }
        self.special_compactions_inner(&mut MergeStats::default());
        Ok(())
    }

    pub(crate) fn special_compactions_inner(&mut self, stats: &mut MergeStats) {
        let half = self.params.b() / 2;
        for h in 0..self.levels.len() - 1 {
            if self.levels[h].len() <= half {
                continue;
            }
            let coin = self.coins_flip();
            let (removed, promoted) = self.levels[h].compact_range(half + 1, coin, &self.order);
            if let Some(trace) = &mut self.trace {
                trace.push(CompactionEvent { level: h, kind: CompactionKind::Special, removed, coin });
            }
            self.levels[h + 1].extend(promoted);
            stats.special_compactions += 1;
        }
    }

    fn coins_flip(&mut self) -> Parity {
        crate::compactor::CoinSource::flip(&mut self.coins)
    }

    /// Bottom-up: every level holding at least `B` items compacts once,
    /// opening a new top level when needed.
    pub(crate) fn scheduled_pass(&mut self, stats: &mut MergeStats) {
        let cap = self.params.capacity();
        let mut h = 0;
        while h < self.levels.len() {
            let len = self.levels[h].len();
            stats.peak_occupancy = stats.peak_occupancy.max(len);
            if len >= cap.b {
                if h + 1 == self.levels.len() {
                    self.levels.push(CompactorState::new(h + 1));
                }
                let (removed, promoted, coin) = self.levels[h].compact_scheduled(cap, &self.order, &mut self.coins);
                if let Some(trace) = &mut self.trace {
                    trace.push(CompactionEvent { level: h, kind: CompactionKind::Scheduled, removed, coin });
                }
                self.levels[h + 1].extend(promoted);
                stats.scheduled_compactions += 1;
            }
            h += 1;
        }
    }

    /// Estimated rank: the total weight of stored items `≤ y`.
    pub fn rank(&self, y: &T) -> u64 {
        self.levels.iter().enumerate().map(|(h, l)| (l.count_le(y, &self.order) as u64) << h).sum()
    }

    /// Total stored weight, `Σ_h 2^h·|buffer_h|`.
    pub fn total_weight(&self) -> u64 {
        self.levels.iter().enumerate().map(|(h, l)| (l.len() as u64) << h).sum()
    }

    /// Stored items with their weights, sorted by item.
    pub fn weighted_items(&self) -> Vec<(T, u64)> {
        let mut all: Vec<(T, u64)> = self
            .levels
            .iter()
            .enumerate()
            .flat_map(|(h, l)| l.iter().map(move |x| (x.clone(), 1u64 << h)))
            .collect();
        all.sort_by(|a, b| self.order.compare(&a.0, &b.0));
        all
    }

    /// The smallest stored item whose estimated rank is at least `r`.
    ///
    /// If odd-length compactions left the stored weight short of `n`, ranks
    /// above the stored weight resolve to the largest stored item.
    pub fn quantile(&self, r: u64) -> Result<T, Error> {
        if self.n == 0 {
            return Err(Error::EmptySketch);
        }
        if r == 0 || r > self.n {
            return Err(Error::RankOutOfRange { rank: r, n: self.n });
        }
        let items = self.weighted_items();
        let mut cum = 0u64;
        let mut i = 0;
        while i < items.len() {
            // rank(y) counts every stored item equal to y
            let mut j = i;
            while j < items.len() && self.order.compare(&items[j].0, &items[i].0) == Ordering::Equal {
                cum += items[j].1;
                j += 1;
            }
            if cum >= r {
                return Ok(items[i].0.clone());
            }
            i = j;
        }
        items.last().map(|(x, _)| x.clone()).ok_or(Error::EmptySketch)
    }

    /// `(y, rank(y)/n)` for each point, sorted by `y`.
    pub fn cdf(&self, points: &[T]) -> Result<Vec<(T, f64)>, Error> {
        if self.n == 0 {
            return Err(Error::EmptySketch);
        }
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| self.order.compare(a, b));
        Ok(pts
            .into_iter()
            .map(|y| {
                let frac = self.rank(&y) as f64 / self.n as f64;
                (y, frac)
            })
            .collect())
    }

    /// Checks the structural invariants that hold between operations.
    pub fn check_invariants(&self) -> Result<(), InvariantViolation> {
        let p = &self.params;
        if self.n > p.bound() {
            return Err(InvariantViolation::LengthBound { n: self.n, bound: p.bound() });
        }
        for (h, level) in self.levels.iter().enumerate() {
            if level.len() > p.b() {
                return Err(InvariantViolation::Overfull { level: h, len: level.len(), cap: p.b() });
            }
            if level.sigma() > p.sigma_limit() {
                return Err(InvariantViolation::Sigma { level: h, sigma: level.sigma(), limit: p.sigma_limit() });
            }
            if !level.is_sorted_by(&self.order) {
                return Err(InvariantViolation::Unsorted { level: h });
            }
            if !level.iter().all(|x| self.order.accepts(x)) {
                return Err(InvariantViolation::InvalidItem { level: h });
            }
        }
        // Without growth the capacity never changes, which bounds the height.
        if p.mode() != Mode::Mergeable {
            let limit = level_limit(self.n, p.b());
            if self.levels.len() > limit {
                return Err(InvariantViolation::TooManyLevels { levels: self.levels.len(), limit, n: self.n });
            }
        }
        Ok(())
    }
}

/// At most `⌈log₂(n/B)⌉ + 1` compactors: level `h` receives at most
/// `n/2^h` items and never compacts once that is below `B`.
pub(crate) fn level_limit(n: u64, b: usize) -> usize {
    if n <= b as u64 {
        return 1;
    }
    let ratio = n.div_ceil(b as u64);
    // ⌈log₂(n/B)⌉ = ⌈log₂ ⌈n/B⌉⌉ for integers
    let ceil_log = 64 - (ratio - 1).leading_zeros() as usize;
    ceil_log + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::order::NaturalOrder;

    fn small() -> Sketch<i64, NaturalOrder> {
        Sketch::with_order(Params::explicit(4, 24, 32).unwrap(), 1, NaturalOrder)
    }

    #[test]
    fn fresh_sketch() {
        let s = Sketch::new(Params::mergeable(0.1, 0.05).unwrap(), 42);
        assert_eq!(s.n(), 0);
        assert_eq!(s.rank(&123.0), 0);
        assert_eq!(s.stored_items(), 0);
        assert_eq!(s.height(), 0);
        assert_eq!(s.quantile(1), Err(Error::EmptySketch));
        assert_eq!(s.cdf(&[1.0]), Err(Error::EmptySketch));
    }

    #[test]
    fn rejects_nan() {
        let mut s = Sketch::new(Params::mergeable(0.1, 0.05).unwrap(), 42);
        assert_eq!(s.update(f64::NAN), Err(Error::InvalidItem));
        assert_eq!(s.n(), 0);
    }

    #[test]
    fn b_plus_one_updates_open_level_one() {
        let mut s = small();
        for i in 1..=24 {
            s.update(i).unwrap();
        }
        assert_eq!(s.height(), 0);
        s.update(25).unwrap();
        assert_eq!(s.height(), 1);
        assert_eq!(s.levels()[1].len(), 2); // L/2 = k/2
        assert_eq!(s.levels()[0].sigma(), 1);
        assert_eq!(s.n(), 25);
        assert_eq!(s.rank(&100), 25);
    }

    #[test]
    fn known_length_bound_is_enforced() {
        let mut s = Sketch::with_order(Params::explicit(4, 16, 16).unwrap(), 1, NaturalOrder);
        for i in 0..16 {
            s.update(i).unwrap();
        }
        assert!(matches!(s.update(16), Err(Error::BoundExceeded { n: 17, bound: 16, .. })));
    }

    #[test]
    fn exact_before_first_compaction() {
        let mut s = Sketch::new(Params::streaming(0.01, 0.1, 100_000).unwrap(), 3);
        assert!(s.params().b() >= 128);
        for i in 1..=100 {
            s.update(i as f64).unwrap();
        }
        assert_eq!(s.rank(&50.0), 50);
        assert_eq!(s.rank(&0.0), 0);
        assert_eq!(s.rank(&200.0), 100);
        assert_eq!(s.quantile(50).unwrap(), 50.0);
        assert_eq!(s.quantile(1).unwrap(), 1.0);
        assert_eq!(s.quantile(101), Err(Error::RankOutOfRange { rank: 101, n: 100 }));
        let cdf = s.cdf(&[100.0, -1.0]).unwrap();
        assert_eq!(cdf, vec![(-1.0, 0.0), (100.0, 1.0)]);
    }

    #[test]
    fn quantile_counts_ties() {
        let mut s = small();
        for x in [1, 2, 2, 2, 3] {
            s.update(x).unwrap();
        }
        assert_eq!(s.quantile(2).unwrap(), 2);
        assert_eq!(s.quantile(4).unwrap(), 2);
        assert_eq!(s.quantile(5).unwrap(), 3);
    }

    #[test]
    fn mergeable_growth_keeps_invariants() {
        let p = Params::mergeable(0.5, 0.2).unwrap();
        let n0 = p.bound();
        let mut s = Sketch::new(p, 11);
        for i in 0..(3 * n0) {
            s.update(((i * 7919) % 10_007) as f64).unwrap();
            if i % 97 == 0 {
                s.check_invariants().unwrap();
            }
        }
        assert_eq!(s.params().bound(), n0 * n0);
        s.check_invariants().unwrap();
    }

    #[test]
    fn trace_records_compactions() {
        let mut s = small();
        s.enable_trace();
        for i in 0..32 {
            s.update(i).unwrap();
        }
        let trace = s.take_trace();
        assert_eq!(trace.len() as u64, s.levels()[0].sigma());
        assert!(trace.iter().all(|e| e.kind == CompactionKind::Scheduled && e.level == 0));
        assert_eq!(trace[0].removed, vec![20, 21, 22, 23]);
    }

    #[test]
    fn level_limit_matches_formula() {
        assert_eq!(level_limit(10, 16), 1);
        assert_eq!(level_limit(17, 16), 2);
        assert_eq!(level_limit(32, 16), 2);
        assert_eq!(level_limit(33, 16), 3);
    }
}
