//! The relative-compactor: one level of the sketch.
//!
//! A compactor buffers up to `B` items. When an insert finds the buffer
//! full, the largest `L = (z(σ)+1)·k` items are removed and either their
//! odd- or their even-indexed half (in sorted order) is promoted to the
//! next level, where `z(σ)` is the number of trailing ones of the schedule
//! state `σ`. The smallest `B/2` items are never part of a scheduled
//! compaction.
//!
//! Positions passed to [`CompactorState::compact_from`] are 1-based, so
//! `start = S` removes `buffer[S..=len]`.
//!
//! Inserts are appended to an unsorted tail and folded into the sorted
//! part right before a compaction: sorting the tail costs `O(log B)`
//! comparisons per item and the fold does one binary search per tail item.

use crate::order::ItemOrder;

/// Number of consecutive 1-bits at the least-significant end of `sigma`.
#[inline]
pub fn trailing_ones(sigma: u64) -> u32 {
    sigma.trailing_ones()
}

/// Which half of a compacted range is promoted. Positions are 1-based
/// within the range: `Odd` keeps the 1st, 3rd, … items, `Even` the 2nd,
/// 4th, ….
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Odd,
    Even,
}

/// Supplier of fair coins, one per compaction.
pub trait CoinSource {
    fn flip(&mut self) -> Parity;
}

impl<F: FnMut() -> Parity> CoinSource for F {
    fn flip(&mut self) -> Parity {
        self()
    }
}

/// Section size and buffer capacity shared by every level of a sketch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Capacity {
    pub k: usize,
    pub b: usize,
}

#[derive(Debug, Clone)]
pub struct CompactorState<T> {
    level: usize,
    sigma: u64,
    compactions: u64,
    sorted: Vec<T>,
    pending: Vec<T>,
}

impl<T: Clone> CompactorState<T> {
    pub fn new(level: usize) -> Self {
        Self { level, sigma: 0, compactions: 0, sorted: Vec::new(), pending: Vec::new() }
    }

    pub(crate) fn from_sorted(level: usize, sigma: u64, items: Vec<T>) -> Self {
        Self { level, sigma, compactions: sigma, sorted: items, pending: Vec::new() }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Schedule state σ.
    pub fn sigma(&self) -> u64 {
        self.sigma
    }

    pub(crate) fn set_sigma(&mut self, sigma: u64) {
        self.sigma = sigma;
    }

    /// Compactions performed by this level (diagnostic).
    pub fn compaction_count(&self) -> u64 {
        self.compactions
    }

    pub fn len(&self) -> usize {
        self.sorted.len() + self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of stored items `≤ y`.
    pub fn count_le<O: ItemOrder<T>>(&self, y: &T, order: &O) -> usize {
        self.sorted.partition_point(|x| order.le(x, y)) + self.pending.iter().filter(|x| order.le(x, y)).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.sorted.iter().chain(self.pending.iter())
    }

    /// Buffer contents in sorted order.
    pub fn sorted_items<O: ItemOrder<T>>(&self, order: &O) -> Vec<T> {
        let mut tail = self.pending.clone();
        tail.sort_by(|a, b| order.compare(a, b));
        fold_sorted(&self.sorted, tail, order)
    }

    /// Sorts the buffer in place.
    pub fn consolidate<O: ItemOrder<T>>(&mut self, order: &O) {
        if self.pending.is_empty() {
            return;
        }
        let mut tail = std::mem::take(&mut self.pending);
        tail.sort_by(|a, b| order.compare(a, b));
        self.sorted = if self.sorted.is_empty() { tail } else { fold_sorted(&self.sorted, tail, order) };
    }

    pub(crate) fn is_sorted_by<O: ItemOrder<T>>(&self, order: &O) -> bool {
        self.sorted.windows(2).all(|w| order.le(&w[0], &w[1]))
    }

    /// `(L, S)`: the number of items a scheduled compaction removes and the
    /// 1-based position where it starts, `S = B − L + 1`.
    pub fn compaction_bounds(&self, cap: Capacity) -> (usize, usize) {
        let sections = trailing_ones(self.sigma) as usize + 1;
        let l = sections * cap.k;
        assert!(
            l <= cap.b / 2,
            "compaction schedule exhausted at level {}: sigma = {} needs {} sections, B/2 holds {}",
            self.level,
            self.sigma,
            sections,
            cap.b / (2 * cap.k)
        );
        (l, cap.b - l + 1)
    }

    /// Removes `buffer[start..=len]` (1-based) and returns the odd- or
    /// even-indexed items of that range. Increments σ.
    ///
    /// # Panics
    /// If `start` is outside `1..=len`.
    pub fn compact_from<O: ItemOrder<T>>(&mut self, start: usize, coin: Parity, order: &O) -> Vec<T> {
        self.compact_range(start, coin, order).1
    }

    /// Like [`compact_from`](Self::compact_from) but also hands back the
    /// removed range.
    pub(crate) fn compact_range<O: ItemOrder<T>>(&mut self, start: usize, coin: Parity, order: &O) -> (Vec<T>, Vec<T>) {
        self.consolidate(order);
        let len = self.sorted.len();
        assert!(start >= 1 && start <= len, "compaction start {start} outside 1..={len} at level {}", self.level);
        let removed = self.sorted.split_off(start - 1);
        let skip = match coin {
            Parity::Odd => 0,
            Parity::Even => 1,
        };
        let promoted = removed.iter().skip(skip).step_by(2).cloned().collect();
        self.sigma = self.sigma.checked_add(1).expect("schedule state overflow");
        self.compactions += 1;
        (removed, promoted)
    }

    /// Scheduled compaction of a buffer holding at least `B` items.
    /// Everything above position `B` is swept into the compacted range.
    pub(crate) fn compact_scheduled<O: ItemOrder<T>>(
        &mut self,
        cap: Capacity,
        order: &O,
        coins: &mut impl CoinSource,
    ) -> (Vec<T>, Vec<T>, Parity) {
        let (_, start) = self.compaction_bounds(cap);
        let coin = coins.flip();
        let (removed, promoted) = self.compact_range(start, coin, order);
        (removed, promoted, coin)
    }

    /// Adds `item`; if the buffer was already full, first runs a scheduled
    /// compaction and returns the promoted items.
    pub fn insert<O: ItemOrder<T>>(
        &mut self,
        item: T,
        cap: Capacity,
        order: &O,
        coins: &mut impl CoinSource,
    ) -> Vec<T> {
        let promoted = if self.len() >= cap.b { self.compact_scheduled(cap, order, coins).1 } else { Vec::new() };
        self.push(item);
        promoted
    }

    /// Adds an item without checking capacity.
    pub(crate) fn push(&mut self, item: T) {
        self.pending.push(item);
    }

    pub(crate) fn extend<I: IntoIterator<Item = T>>(&mut self, items: I) {
        self.pending.extend(items);
    }

    pub(crate) fn take_all<O: ItemOrder<T>>(&mut self, order: &O) -> Vec<T> {
        self.consolidate(order);
        std::mem::take(&mut self.sorted)
    }
}

/// Merges sorted `tail` into sorted `base`: one binary search per tail item,
/// contiguous runs of `base` copied in bulk.
fn fold_sorted<T: Clone, O: ItemOrder<T>>(base: &[T], tail: Vec<T>, order: &O) -> Vec<T> {
    let mut out = Vec::with_capacity(base.len() + tail.len());
    let mut cursor = 0;
    for x in tail {
        let idx = cursor + base[cursor..].partition_point(|b| order.le(b, &x));
        out.extend_from_slice(&base[cursor..idx]);
        out.push(x);
        cursor = idx;
    }
    out.extend_from_slice(&base[cursor..]);
    out
}
