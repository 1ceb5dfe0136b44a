//! Seeded generation of distinct word-size primes.
//!
//! Distinct primes are trivially pairwise coprime, so every modulus handed
//! out by one generator can be combined without gcd checks. Emission is
//! tracked in an explicit used-set rather than trusting low collision
//! probability: a repeated prime would surface as `NotCoprime` deep inside
//! a run.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CraError, Result};
use crate::modarith::{mulmod_u64, powmod_u64};

pub const DEFAULT_PRIME_BITS: u32 = 31;

/// Bit sizes small enough to enumerate exhaustively, which makes
/// `Exhausted` detection exact instead of probabilistic.
const SMALL_BITS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimeMode {
    /// Rejection-sampled random primes; required for the probabilistic
    /// early-termination guarantee.
    Random,
    /// Consecutive primes descending from `2^bit_size - 1`. Useful when the
    /// iteration moduli may be fixed and only termination checks need
    /// randomness; [`PrimeGenerator::next_random`] stays random.
    FixedSequence,
}

/// Source of distinct `bit_size`-bit primes, reproducible from a seed.
#[derive(Debug, Clone)]
pub struct PrimeGenerator {
    rng: ChaCha8Rng,
    bit_size: u32,
    mode: PrimeMode,
    used: HashSet<u64>,
    fixed_cursor: u64,
    total_of_size: Option<usize>,
}

impl PrimeGenerator {
    pub fn new(seed: u64) -> Self {
        Self::with_config(seed, DEFAULT_PRIME_BITS, PrimeMode::Random)
    }

    pub fn with_config(seed: u64, bit_size: u32, mode: PrimeMode) -> Self {
        assert!(
            (2..=62).contains(&bit_size),
            "prime bit size must be in 2..=62"
        );
        PrimeGenerator {
            rng: ChaCha8Rng::seed_from_u64(seed),
            bit_size,
            mode,
            used: HashSet::new(),
            fixed_cursor: (1u64 << bit_size) - 1,
            total_of_size: None,
        }
    }

    pub fn bit_size(&self) -> u32 {
        self.bit_size
    }

    pub fn emitted(&self) -> usize {
        self.used.len()
    }

    /// Next modulus for the iteration stream, honoring the configured mode.
    pub fn next_coprime(&mut self) -> Result<u64> {
        match self.mode {
            PrimeMode::Random => self.random_prime(),
            PrimeMode::FixedSequence => self.fixed_prime(),
        }
    }

    /// A fresh random prime regardless of mode, for termination checks.
    pub fn next_random(&mut self) -> Result<u64> {
        self.random_prime()
    }

    /// Reserves `count` fresh primes for one worker; they will never be
    /// emitted by this generator again.
    pub fn make_slice(&mut self, count: usize) -> Result<CoPrimeSlice> {
        let mut primes = Vec::with_capacity(count);
        for _ in 0..count {
            primes.push(self.next_coprime()?);
        }
        Ok(CoPrimeSlice { primes })
    }

    fn range(&self) -> (u64, u64) {
        (1u64 << (self.bit_size - 1), (1u64 << self.bit_size) - 1)
    }

    fn exhausted(&mut self) -> bool {
        if self.bit_size > SMALL_BITS {
            return false;
        }
        let bit_size = self.bit_size;
        let total = *self
            .total_of_size
            .get_or_insert_with(|| count_primes_of_bit_size(bit_size));
        self.used.len() >= total
    }

    fn random_prime(&mut self) -> Result<u64> {
        if self.exhausted() {
            return Err(CraError::Exhausted {
                bit_size: self.bit_size,
            });
        }
        let (lo, hi) = self.range();
        // Never hit in practice at >20 bits; small sizes are exact above.
        for _ in 0..2_000_000u64 {
            let candidate = self.rng.gen_range(lo..=hi);
            if is_prime_u64(candidate) && self.used.insert(candidate) {
                return Ok(candidate);
            }
        }
        Err(CraError::Exhausted {
            bit_size: self.bit_size,
        })
    }

    fn fixed_prime(&mut self) -> Result<u64> {
        let (lo, _) = self.range();
        while self.fixed_cursor >= lo {
            let candidate = self.fixed_cursor;
            self.fixed_cursor -= 1;
            if is_prime_u64(candidate) && self.used.insert(candidate) {
                return Ok(candidate);
            }
        }
        Err(CraError::Exhausted {
            bit_size: self.bit_size,
        })
    }
}

/// An ordered batch of primes reserved for one worker. Immutable once
/// created; disjoint from every other slice and from the generator's
/// future emissions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoPrimeSlice {
    primes: Vec<u64>,
}

impl CoPrimeSlice {
    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }
}

/// Deterministic Miller-Rabin for u64; the fixed witness set is exact for
/// every 64-bit input.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n.is_multiple_of(p) {
            return false;
        }
    }
    let d = n - 1;
    let s = d.trailing_zeros();
    let d = d >> s;
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = powmod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn count_primes_of_bit_size(bit_size: u32) -> usize {
    let hi = 1usize << bit_size;
    let lo = hi >> 1;
    let mut composite = vec![false; hi];
    let mut count = 0;
    for n in 2..hi {
        if !composite[n] {
            if n >= lo {
                count += 1;
            }
            let mut m = n * n;
            while m < hi {
                composite[m] = true;
                m += n;
            }
        }
    }
    count
}
