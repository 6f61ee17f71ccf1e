use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compactor::{CoinSource, Parity};

/// Identifier of the coin generator recorded in serialized sketches:
/// ChaCha8 seeded with `seed_from_u64`, one 32-bit word per coin.
pub const RNG_CHACHA8: u8 = 1;

/// The sketch's coin generator. Every compaction consumes exactly one word,
/// so the state is fully described by `(seed, consumed)`.
#[derive(Debug, Clone)]
pub struct Coins {
    seed: u64,
    consumed: u64,
    rng: ChaCha8Rng,
}

impl Coins {
    pub fn new(seed: u64) -> Self {
        Self { seed, consumed: 0, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Rebuilds the generator after `consumed` coins have been drawn.
    pub fn restore(seed: u64, consumed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_word_pos(u128::from(consumed));
        Self { seed, consumed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn consumed(&self) -> u64 {
        self.consumed
    }
}

impl CoinSource for Coins {
    fn flip(&mut self) -> Parity {
        self.consumed += 1;
        if self.rng.next_u32() & 1 == 0 {
            Parity::Odd
        } else {
            Parity::Even
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn restore_replays_the_same_coins() {
        let mut a = Coins::new(99);
        let prefix: Vec<_> = (0..37).map(|_| a.flip()).collect();
        assert_eq!(prefix.len(), 37);
        let mut b = Coins::restore(99, a.consumed());
        for _ in 0..200 {
            assert_eq!(a.flip(), b.flip());
        }
    }

    #[test]
    fn coins_are_roughly_fair() {
        let mut c = Coins::new(5);
        let even = (0..20_000).filter(|_| c.flip() == Parity::Even).count();
        // 20k fair flips: sd ≈ 71
        assert!((even as i64 - 10_000).abs() < 500, "{even}");
    }
}
