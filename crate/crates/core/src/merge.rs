//! Merging two mergeable-mode sketches.
//!
//! The sketch with more levels is the target and the other one is folded
//! into it:
//!
//! 1. `n ← n' + n''`. While the target's bound is below the combined
//!    length (or below the source's bound), the target runs special
//!    compactions with its current `B` and squares `N`.
//! 2. If the source's bound is now below the target's, the source runs
//!    special compactions with its own `B`.
//! 3. Level by level the buffers are concatenated and the schedule states
//!    combined with bitwise OR. Levels only the source has are adopted.
//! 4. Bottom-up, each level holding at least `B` items compacts once from
//!    position `B − (z(σ)+1)·k + 1`; everything above position `B` is swept
//!    into that compaction.
//!
//! The result keeps the target's coin generator.

use crate::error::MergeError;
use crate::order::ItemOrder;
use crate::params::Mode;
use crate::sketch::Sketch;

/// Occupancy and compaction counts observed during one merge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MergeStats {
    /// Largest buffer seen during the bottom-up pass.
    pub peak_occupancy: usize,
    /// `⌈7/2·B⌉` for the result's `B`.
    pub occupancy_cap: usize,
    pub special_compactions: usize,
    pub scheduled_compactions: usize,
    /// Number of times the target's bound was squared.
    pub growth_steps: usize,
}

impl MergeStats {
    pub fn within_cap(&self) -> bool {
        self.peak_occupancy <= self.occupancy_cap
    }
}

/// Merges two sketches, consuming both.
pub fn merge<T: Clone, O: ItemOrder<T> + PartialEq>(a: Sketch<T, O>, b: Sketch<T, O>) -> Result<Sketch<T, O>, MergeError> {
    merge_with_stats(a, b).map(|(s, _)| s)
}

/// Picks the target: more levels first, then larger `n`, larger `N`,
/// larger seed and more coins consumed. Only an exact tie keeps the
/// argument order.
fn first_is_target<T: Clone, O: ItemOrder<T>>(a: &Sketch<T, O>, b: &Sketch<T, O>) -> bool {
    let key = |s: &Sketch<T, O>| (s.levels.len(), s.n, s.params.bound(), s.seed(), s.coins_consumed());
    key(a) >= key(b)
}

pub fn merge_with_stats<T: Clone, O: ItemOrder<T> + PartialEq>(
    a: Sketch<T, O>,
    b: Sketch<T, O>,
) -> Result<(Sketch<T, O>, MergeStats), MergeError> {
    for s in [&a, &b] {
        if s.params.mode() != Mode::Mergeable {
            return Err(MergeError::NotMergeable(s.params.mode()));
        }
    }
    let (ka, kb) = (a.params.k_hat(), b.params.k_hat());
    if ka.map(f64::to_bits) != kb.map(f64::to_bits) {
        let show = |k: Option<f64>| k.map_or_else(|| "none".to_string(), |v| v.to_string());
        return Err(MergeError::KHatMismatch(show(ka), show(kb)));
    }
    if a.order != b.order {
        return Err(MergeError::OrderMismatch);
    }
    let (mut target, mut source) = if first_is_target(&a, &b) { (a, b) } else { (b, a) };
    let mut stats = MergeStats::default();

    target.n = target.n.checked_add(source.n).ok_or(MergeError::LengthOverflow)?;
    while target.params.bound() < target.n || target.params.bound() < source.params.bound() {
        target.special_compactions_inner(&mut stats);
        target.params = target.params.grow().expect("mergeable parameters always grow");
        stats.growth_steps += 1;
    }
    if source.params.bound() < target.params.bound() {
        source.special_compactions_inner(&mut stats);
    }

    let order = target.order.clone();
    for (h, mut level) in source.levels.into_iter().enumerate() {
        if h < target.levels.len() {
            let dst = &mut target.levels[h];
            dst.set_sigma(dst.sigma() | level.sigma());
            dst.extend(level.take_all(&order));
        } else {
            target.levels.push(level);
        }
    }

    target.scheduled_pass(&mut stats);
    stats.occupancy_cap = (7 * target.params.b()).div_ceil(2);
    Ok((target, stats))
}

impl<T: Clone, O: ItemOrder<T> + PartialEq> Sketch<T, O> {
    /// Merges `other` into `self`; see [`merge`].
    pub fn merge(self, other: Self) -> Result<Self, MergeError> {
        merge(self, other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Params;

    fn build(seed: u64, items: impl IntoIterator<Item = f64>) -> Sketch {
        let mut s = Sketch::new(Params::mergeable(0.5, 0.2).unwrap(), seed);
        s.extend_from(items).unwrap();
        s
    }

    #[test]
    fn merging_empty_changes_nothing() {
        let s = build(1, (0..5000).map(|i| ((i * 37) % 5000) as f64));
        let before: Vec<u64> = (0..5000).step_by(50).map(|y| s.rank(&(y as f64))).collect();
        let empty = build(2, []);
        let m = merge(s.clone(), empty).unwrap();
        let after: Vec<u64> = (0..5000).step_by(50).map(|y| m.rank(&(y as f64))).collect();
        assert_eq!(before, after);
        assert_eq!(m.n(), 5000);
    }

    #[test]
    fn states_are_ored() {
        let mut a = build(1, []);
        let mut b = build(2, []);
        a.levels[0].set_sigma(0b101);
        b.levels[0].set_sigma(0b011);
        let m = merge(a, b).unwrap();
        assert_eq!(m.levels()[0].sigma(), 0b111);
    }

    #[test]
    fn rejects_mismatched_sketches() {
        let a = build(1, []);
        let b = Sketch::new(Params::mergeable(0.25, 0.2).unwrap(), 1);
        assert!(matches!(merge(a.clone(), b), Err(MergeError::KHatMismatch(..))));
        let c = Sketch::new(Params::streaming(0.5, 0.2, 1000).unwrap(), 1);
        assert_eq!(merge(a, c).unwrap_err(), MergeError::NotMergeable(Mode::StreamingKnownN));
    }

    #[test]
    fn merge_of_shards_tracks_total_weight() {
        let a = build(3, (1..=1000).map(f64::from));
        let b = build(4, (1001..=2000).map(f64::from));
        let (m, stats) = merge_with_stats(a, b).unwrap();
        assert_eq!(m.n(), 2000);
        assert!(stats.within_cap());
        m.check_invariants().unwrap();
        // both shards stay below N₀ here, so nothing is compacted oddly
        let expect_odd = stats.special_compactions > 0;
        if !expect_odd {
            assert_eq!(m.rank(&2000.0), m.total_weight());
        }
    }

    #[test]
    fn argument_order_does_not_matter() {
        let a = build(5, (0..20_000).map(|i| (i % 977) as f64));
        let b = build(6, (0..3000).map(|i| i as f64 * 0.5));
        let ab = merge(a.clone(), b.clone()).unwrap();
        let ba = merge(b, a).unwrap();
        let sizes = |s: &Sketch| s.levels().iter().map(|l| l.len()).collect::<Vec<_>>();
        assert_eq!(sizes(&ab), sizes(&ba));
        for y in (0..1000).step_by(13) {
            assert_eq!(ab.rank(&(y as f64)), ba.rank(&(y as f64)));
        }
    }

    #[test]
    fn special_compactions_leave_half() {
        let mut s = Sketch::new(Params::mergeable(0.5, 0.2).unwrap(), 9);
        let b = s.params().b();
        // fill level 0 to B without compacting, then force a level 1
        for i in 0..b {
            s.levels[0].push(i as f64);
        }
        s.levels.push(crate::CompactorState::new(1));
        let before_sigma = s.levels[1].sigma();
        s.special_compactions().unwrap();
        assert_eq!(s.levels()[0].len(), b / 2);
        assert_eq!(s.levels()[0].sigma(), 1);
        assert_eq!(s.levels()[1].len(), b / 4);
        assert_eq!(s.levels()[1].sigma(), before_sigma);

        // exactly B/2 items: untouched
        s.special_compactions().unwrap();
        assert_eq!(s.levels()[0].sigma(), 1);
    }
}
