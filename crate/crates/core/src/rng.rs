//! The single pseudo-random stream used by the optimizer and simulated users.
//!
//! Generator: xoshiro256++ seeded through SplitMix64 expansion of a `u64`
//! seed (the `seed_from_u64` convention of `rand_xoshiro`). Only two derived
//! draws are ever taken from it, both defined here so that other
//! implementations of the same generator can reproduce every run:
//!
//! * [`below`]: an integer in `[0, n)` by Lemire's multiply-and-reject method
//!   on one or more `next_u64` outputs,
//! * [`unit`]: a float in `[0, 1)` from the top 53 bits of one `next_u64`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type TeamRng = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> TeamRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Uniform integer in `[0, n)`. `n` must be positive.
pub fn below<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> usize {
    assert!(n > 0, "empty range");
    let n = n as u64;
    let mut m = u128::from(rng.next_u64()) * u128::from(n);
    if (m as u64) < n {
        let threshold = n.wrapping_neg() % n;
        while (m as u64) < threshold {
            m = u128::from(rng.next_u64()) * u128::from(n);
        }
    }
    (m >> 64) as usize
}

/// Uniform float in `[0, 1)`.
pub fn unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Fisher–Yates prefix: moves a uniform `count`-subset of `items` (in draw
/// order) to the front. Consumes exactly `count` draws of [`below`].
pub fn partial_shuffle<T, R: RngCore + ?Sized>(rng: &mut R, items: &mut [T], count: usize) {
    let len = items.len();
    for i in 0..count.min(len) {
        let j = i + below(rng, len - i);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn below_stays_in_range_and_hits_everything() {
        let mut rng = seeded(3);
        let mut seen = [0usize; 7];
        for _ in 0..7000 {
            seen[below(&mut rng, 7)] += 1;
        }
        assert!(seen.iter().all(|&c| c > 800 && c < 1200), "{seen:?}");
    }

    #[test]
    fn unit_is_half_open() {
        let mut rng = seeded(11);
        for _ in 0..10_000 {
            let u = unit(&mut rng);
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = seeded(42);
        let mut b = seeded(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn partial_shuffle_is_a_permutation() {
        let mut rng = seeded(5);
        let mut items: Vec<u32> = (0..10).collect();
        partial_shuffle(&mut rng, &mut items, 4);
        let mut sorted = items.clone();
        sorted.sort();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
    }
}
