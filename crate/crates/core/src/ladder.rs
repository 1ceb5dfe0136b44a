//! Radix ladder: a linear-space accumulator of partially combined residue
//! pairs, sized so that combinations stay balanced for fast arithmetic.
//!
//! Shelf `i` holds at most one pair of size class `2^i` words. An insert
//! starts at the level of the incoming modulus and cascades like a binary
//! counter carry: whenever the target shelf is occupied, the two pairs are
//! combined, the shelf is popped and the combination moves up exactly one
//! level. Combined moduli may straddle a size-class boundary; occupancy
//! then follows the insertion count, which is what keeps the counter law
//! exact.

use num_bigint::BigUint;
use num_traits::One;

use crate::controller::RunStats;
use crate::error::{CraError, Result};
use crate::modarith::{crt_pair, inv_mod, lift_with_inverse, ResiduePair};

pub const DEFAULT_WORD_BITS: u32 = 64;

/// Size class of a modulus: `ceil(log2(max(1, ceil(bitlen / word_bits))))`.
pub fn shelf_level(modulus: &BigUint, word_bits: u32) -> usize {
    debug_assert!(modulus >= &BigUint::from(2u32));
    let words = modulus.bits().div_ceil(word_bits as u64).max(1);
    words.next_power_of_two().trailing_zeros() as usize
}

/// Number of `word_bits` words occupied by a modulus.
fn word_count(modulus: &BigUint, word_bits: u32) -> u64 {
    modulus.bits().div_ceil(word_bits as u64).max(1)
}

/// One shelf occupant: anything carrying a modulus that can be combined
/// with another occupant over coprime moduli.
pub trait ShelfItem: Sized {
    fn modulus(&self) -> &BigUint;
    fn combine(self, other: Self) -> Result<Self>;
}

impl ShelfItem for ResiduePair {
    fn modulus(&self) -> &BigUint {
        ResiduePair::modulus(self)
    }

    fn combine(self, other: Self) -> Result<Self> {
        crt_pair(&self, &other)
    }
}

/// Vector-mode occupant: one modulus shared by a vector of residues, all
/// entries combined with the same precomputed inverse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorPair {
    pub residues: Vec<BigUint>,
    pub modulus: BigUint,
}

impl VectorPair {
    pub fn from_u64(residues: &[u64], modulus: u64) -> Self {
        VectorPair {
            residues: residues
                .iter()
                .map(|&v| BigUint::from(v % modulus))
                .collect(),
            modulus: BigUint::from(modulus),
        }
    }
}

impl ShelfItem for VectorPair {
    fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    fn combine(self, other: Self) -> Result<Self> {
        if self.residues.len() != other.residues.len() {
            return Err(CraError::LengthMismatch {
                expected: self.residues.len(),
                got: other.residues.len(),
            });
        }
        // One inverse amortized over every entry.
        let inv = inv_mod(&self.modulus, &other.modulus)?;
        let residues = self
            .residues
            .iter()
            .zip(&other.residues)
            .map(|(u, v)| lift_with_inverse(u, &self.modulus, v, &other.modulus, &inv))
            .collect();
        Ok(VectorPair {
            residues,
            modulus: &self.modulus * &other.modulus,
        })
    }
}

/// The ladder itself. Single-threaded by design: parallel callers give each
/// worker its own ladder and merge, never share one.
#[derive(Debug, Clone)]
pub struct RadixLadder<T: ShelfItem> {
    shelves: Vec<Option<T>>,
    word_bits: u32,
}

impl<T: ShelfItem> Default for RadixLadder<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: ShelfItem> RadixLadder<T> {
    pub fn new() -> Self {
        Self::with_word_bits(DEFAULT_WORD_BITS)
    }

    pub fn with_word_bits(word_bits: u32) -> Self {
        assert!(word_bits >= 1);
        RadixLadder {
            shelves: Vec::new(),
            word_bits,
        }
    }

    pub fn word_bits(&self) -> u32 {
        self.word_bits
    }

    pub fn is_empty(&self) -> bool {
        self.shelves.iter().all(Option::is_none)
    }

    pub fn occupied_levels(&self) -> Vec<usize> {
        self.shelves
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|_| i))
            .collect()
    }

    pub fn occupied_count(&self) -> usize {
        self.shelves.iter().filter(|s| s.is_some()).count()
    }

    pub fn occupant(&self, level: usize) -> Option<&T> {
        self.shelves.get(level).and_then(Option::as_ref)
    }

    /// The single occupant, if exactly one shelf is full.
    pub fn lone_occupant(&self) -> Option<&T> {
        let mut found = None;
        for item in self.shelves.iter().flatten() {
            if found.is_some() {
                return None;
            }
            found = Some(item);
        }
        found
    }

    /// Product of all held moduli.
    pub fn modulus_product(&self) -> BigUint {
        self.shelves
            .iter()
            .flatten()
            .fold(BigUint::one(), |acc, item| acc * item.modulus())
    }

    fn ensure(&mut self, level: usize) {
        if self.shelves.len() <= level {
            self.shelves.resize_with(level + 1, || None);
        }
    }

    /// Inserts a pair, cascading combinations upward until a free shelf.
    /// The incoming modulus must be coprime to every modulus in the ladder.
    pub fn insert(&mut self, item: T, stats: &mut RunStats) -> Result<()> {
        let mut level = shelf_level(item.modulus(), self.word_bits);
        let mut item = item;
        loop {
            self.ensure(level);
            match self.shelves[level].take() {
                None => {
                    self.shelves[level] = Some(item);
                    return Ok(());
                }
                Some(occupant) => {
                    let words = word_count(item.modulus(), self.word_bits)
                        .max(word_count(occupant.modulus(), self.word_bits));
                    stats.record_combine(level, words);
                    item = item.combine(occupant)?;
                    level += 1;
                }
            }
        }
    }

    /// In-place merge: every occupied shelf of `source` is inserted bottom
    /// up; `source` is left empty.
    pub fn merge(&mut self, source: &mut Self, stats: &mut RunStats) -> Result<()> {
        for level in 0..source.shelves.len() {
            if let Some(item) = source.shelves[level].take() {
                self.insert(item, stats)?;
            }
        }
        Ok(())
    }

    /// Folds every shelf from the ground level up into one pair holding the
    /// full product of moduli. Drains the ladder; callers that need to
    /// continue re-insert the result.
    pub fn collapse(&mut self, stats: &mut RunStats) -> Result<T> {
        let mut acc: Option<T> = None;
        for level in 0..self.shelves.len() {
            if let Some(item) = self.shelves[level].take() {
                acc = Some(match acc {
                    None => item,
                    Some(lower) => {
                        let words = word_count(item.modulus(), self.word_bits)
                            .max(word_count(lower.modulus(), self.word_bits));
                        stats.record_combine(level, words);
                        item.combine(lower)?
                    }
                });
            }
        }
        acc.ok_or(CraError::EmptyLadder)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use proptest::prelude::*;

    fn pair(r: u64, m: u64) -> ResiduePair {
        ResiduePair::from_u64(r, m)
    }

    const PRIMES16: [u64; 12] = [
        65521, 65519, 65497, 65479, 65449, 65447, 65437, 65423, 65419, 65413, 65407, 65393,
    ];

    #[test]
    fn shelf_level_examples() {
        // bit lengths 31, 100 and 300 at 64-bit words.
        let m31 = BigUint::one() << 30;
        let m100 = BigUint::one() << 99;
        let m300 = BigUint::one() << 299;
        assert_eq!(shelf_level(&m31, 64), 0);
        assert_eq!(shelf_level(&m100, 64), 1);
        assert_eq!(shelf_level(&m300, 64), 3);
    }

    #[test]
    fn insert_counts_like_binary_counter() {
        let mut stats = RunStats::default();
        let mut ladder: RadixLadder<ResiduePair> = RadixLadder::new();
        ladder.insert(pair(1, PRIMES16[0]), &mut stats).unwrap();
        assert_eq!(ladder.occupied_levels(), vec![0]);

        let mut ladder: RadixLadder<ResiduePair> = RadixLadder::new();
        for p in &PRIMES16[..5] {
            ladder.insert(pair(1, *p), &mut stats).unwrap();
        }
        // 5 = 0b101: levels 0 and 2 occupied.
        assert_eq!(ladder.occupied_levels(), vec![0, 2]);
    }

    #[test]
    fn two_small_pairs_combine_at_level_one() {
        let mut stats = RunStats::default();
        let mut ladder: RadixLadder<ResiduePair> = RadixLadder::new();
        ladder.insert(pair(2, 3), &mut stats).unwrap();
        ladder.insert(pair(3, 5), &mut stats).unwrap();
        assert_eq!(ladder.occupied_levels(), vec![1]);
        assert_eq!(ladder.occupant(1).unwrap(), &pair(8, 15));
    }

    #[test]
    fn collapse_examples() {
        let mut stats = RunStats::default();
        let mut ladder: RadixLadder<ResiduePair> = RadixLadder::new();
        ladder.insert(pair(2, 3), &mut stats).unwrap();
        assert_eq!(ladder.collapse(&mut stats).unwrap(), pair(2, 3));
        assert!(ladder.is_empty());
        assert_eq!(ladder.collapse(&mut stats), Err(CraError::EmptyLadder));

        let mut ladder: RadixLadder<ResiduePair> = RadixLadder::new();
        ladder.insert(pair(1, 4), &mut stats).unwrap();
        ladder.insert(pair(2, 9), &mut stats).unwrap();
        // Brute-force: 29 is the unique x in [0, 36) with x≡1 (4), x≡2 (9).
        assert_eq!(ladder.collapse(&mut stats).unwrap(), pair(29, 36));
    }

    #[test]
    fn collapse_of_eight_primes_matches_known_target() {
        let mut stats = RunStats::default();
        let target = BigUint::from(0x1234_5678_9abc_def0u64);
        let mut ladder: RadixLadder<ResiduePair> = RadixLadder::new();
        let mut product = BigUint::one();
        for p in &PRIMES16[..8] {
            let r = (&target % p).try_into().unwrap();
            ladder.insert(pair(r, *p), &mut stats).unwrap();
            product *= *p;
        }
        let got = ladder.collapse(&mut stats).unwrap();
        assert_eq!(got.modulus(), &product);
        assert_eq!(got.residue(), &(&target % &product));
    }

    #[test]
    fn merge_examples() {
        let mut stats = RunStats::default();
        let mut a: RadixLadder<ResiduePair> = RadixLadder::new();
        let mut b: RadixLadder<ResiduePair> = RadixLadder::new();
        a.merge(&mut b, &mut stats).unwrap();
        assert!(a.is_empty());

        a.insert(pair(2, 3), &mut stats).unwrap();
        b.insert(pair(3, 5), &mut stats).unwrap();
        a.merge(&mut b, &mut stats).unwrap();
        assert!(b.is_empty());
        assert_eq!(a.collapse(&mut stats).unwrap(), pair(8, 15));
    }

    #[test]
    fn vector_pairs_combine_entrywise() {
        let mut stats = RunStats::default();
        let mut ladder: RadixLadder<VectorPair> = RadixLadder::new();
        // Target vector (-3, 10) seen modulo 3, 5, 7.
        ladder
            .insert(VectorPair::from_u64(&[0, 1], 3), &mut stats)
            .unwrap();
        ladder
            .insert(VectorPair::from_u64(&[2, 0], 5), &mut stats)
            .unwrap();
        ladder
            .insert(VectorPair::from_u64(&[4, 3], 7), &mut stats)
            .unwrap();
        let got = ladder.collapse(&mut stats).unwrap();
        assert_eq!(got.modulus, BigUint::from(105u32));
        assert_eq!(
            got.residues,
            vec![BigUint::from(102u32), BigUint::from(10u32)]
        );
        assert_eq!(
            crate::modarith::symmetric_rem(&BigInt::from(102), &got.modulus),
            BigInt::from(-3)
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn counter_law_and_linear_space(n in 1usize..=12) {
            let mut stats = RunStats::default();
            let mut ladder: RadixLadder<ResiduePair> = RadixLadder::new();
            for p in &PRIMES16[..n] {
                ladder.insert(pair(1, *p), &mut stats).unwrap();
            }
            let expected: Vec<usize> = (0..usize::BITS)
                .filter(|i| n >> i & 1 == 1)
                .map(|i| i as usize)
                .collect();
            prop_assert_eq!(ladder.occupied_levels(), expected);
            prop_assert!(ladder.occupied_count() <= n.ilog2() as usize + 1);
        }

        #[test]
        fn collapse_ignores_insertion_order(order in Just(()).prop_perturb(|_, mut rng| {
            let mut idx: Vec<usize> = (0..12).collect();
            for i in (1..idx.len()).rev() {
                idx.swap(i, rng.random_range(0..=i));
            }
            idx
        }), seed in any::<u64>()) {
            let mut stats = RunStats::default();
            let target = BigUint::from(seed);
            let mut sorted: RadixLadder<ResiduePair> = RadixLadder::new();
            let mut shuffled: RadixLadder<ResiduePair> = RadixLadder::new();
            for p in PRIMES16 {
                let r: u64 = (&target % p).try_into().unwrap();
                sorted.insert(pair(r, p), &mut stats).unwrap();
            }
            for i in order {
                let p = PRIMES16[i];
                let r: u64 = (&target % p).try_into().unwrap();
                shuffled.insert(pair(r, p), &mut stats).unwrap();
            }
            prop_assert_eq!(
                sorted.collapse(&mut stats).unwrap(),
                shuffled.collapse(&mut stats).unwrap()
            );
        }

        #[test]
        fn merge_equals_single_ladder(split in proptest::collection::vec(any::<bool>(), 12), seed in any::<u64>()) {
            let mut stats = RunStats::default();
            let target = BigUint::from(seed);
            let mut one: RadixLadder<ResiduePair> = RadixLadder::new();
            let mut left: RadixLadder<ResiduePair> = RadixLadder::new();
            let mut right: RadixLadder<ResiduePair> = RadixLadder::new();
            for (p, goes_left) in PRIMES16.iter().zip(split) {
                let r: u64 = (&target % p).try_into().unwrap();
                one.insert(pair(r, *p), &mut stats).unwrap();
                let side = if goes_left { &mut left } else { &mut right };
                side.insert(pair(r, *p), &mut stats).unwrap();
            }
            left.merge(&mut right, &mut stats).unwrap();
            prop_assert_eq!(left.collapse(&mut stats).unwrap(), one.collapse(&mut stats).unwrap());
        }
    }
}
