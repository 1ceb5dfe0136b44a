//! Reconstruction strategies behind one builder interface.
//!
//! A builder owns the reconstruction storage and the termination decision;
//! the controller only ever calls `initialize`, `update(v, p)`,
//! `not_terminated` and `reconstruct`. Five strategies are provided:
//!
//! * [`FullMultipBuilder`] — deterministic, stops once the modulus product
//!   exceeds twice a caller-supplied bound;
//! * [`EarlySingleBuilder`] — probabilistic, stops after the scalar
//!   reconstruction survives `ET` consecutive fresh residues;
//! * [`EarlyMultipBuilder`] — vector storage, early termination on a random
//!   linear combination of the entries;
//! * [`EarlyBalancedBuilder`] — ladder storage, termination tests only when
//!   one shelf is full (residue counts that are powers of two), so every
//!   combination stays balanced;
//! * [`AmortizedBuilder`] — like balanced, but tests at a denser checkpoint
//!   schedule `ceil(rho^g(i))` merged with the powers of two, wasting fewer
//!   applies past the minimal count.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blackbox::ResidueBlackBox;
use crate::controller::RunStats;
use crate::error::{CraError, Result};
use crate::ladder::{shelf_level, RadixLadder, VectorPair};
use crate::modarith::{crt_pair, rem_u64, symmetric_rem, ResiduePair};
use crate::primes::PrimeGenerator;

pub const DEFAULT_EARLY_TERMINATION: usize = 2;

/// Strategy selector mirroring the CLI flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Deterministic,
    Earliest,
    Multi,
    Balanced,
    Amortized,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Deterministic => "deterministic",
            Strategy::Earliest => "earliest",
            Strategy::Multi => "multi",
            Strategy::Balanced => "balanced",
            Strategy::Amortized => "amortized",
        }
    }

    pub const ALL: [Strategy; 5] = [
        Strategy::Deterministic,
        Strategy::Earliest,
        Strategy::Multi,
        Strategy::Balanced,
        Strategy::Amortized,
    ];
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// What a termination test may consume: fresh primes and black-box applies,
/// charged to the shared run statistics.
pub struct Probe<'a> {
    pub blackbox: &'a dyn ResidueBlackBox,
    pub generator: &'a mut PrimeGenerator,
    pub stats: &'a mut RunStats,
}

/// The builder interface driven by the controllers.
///
/// Contract: once `not_terminated` has returned `false`, `reconstruct`
/// yields a value congruent to every `(v, p)` ever passed to `update`.
pub trait Builder {
    type Output;

    /// Resets to the freshly-constructed state.
    fn initialize(&mut self);

    /// Folds one residue into the reconstruction. `value` carries one entry
    /// per black-box dimension.
    fn update(&mut self, value: &[u64], p: u64, stats: &mut RunStats) -> Result<()>;

    /// Termination test. May itself consume applies through the probe.
    fn not_terminated(&mut self, probe: &mut Probe<'_>) -> Result<bool>;

    /// Final signed result; consumes the internal storage.
    fn reconstruct(&mut self, stats: &mut RunStats) -> Result<Self::Output>;
}

fn expect_scalar(value: &[u64]) -> Result<u64> {
    if value.len() != 1 {
        return Err(CraError::LengthMismatch {
            expected: 1,
            got: value.len(),
        });
    }
    Ok(value[0])
}

fn expect_dimension(value: &[u64], dim: usize) -> Result<()> {
    if value.len() != dim {
        return Err(CraError::LengthMismatch {
            expected: dim,
            got: value.len(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Early-termination state shared by the earliest and multi strategies.

/// Stabilization tracker for one scalar stream.
///
/// The candidate is kept as the symmetric (signed) representative fixed at
/// the last recombination; a matching residue multiplies the modulus lazily
/// without recombining, a mismatch resets the counter and performs the
/// exact two-pair lift. Comparing against the signed candidate is what lets
/// negative targets stabilize at all: their unsigned representative changes
/// with every modulus extension.
#[derive(Debug, Clone)]
pub struct EarlyState {
    candidate: BigInt,
    modulus: BigUint,
    stabilization: usize,
    threshold: usize,
}

impl EarlyState {
    pub fn new(threshold: usize) -> Self {
        assert!(threshold >= 1, "early termination threshold must be >= 1");
        EarlyState {
            candidate: BigInt::zero(),
            modulus: BigUint::one(),
            stabilization: 0,
            threshold,
        }
    }

    /// Starts from an existing unsigned pair, taking its residue verbatim
    /// as the candidate.
    pub fn from_pair(pair: ResiduePair, threshold: usize) -> Self {
        assert!(threshold >= 1);
        let (residue, modulus) = pair.into_parts();
        EarlyState {
            candidate: BigInt::from(residue),
            modulus,
            stabilization: 0,
            threshold,
        }
    }

    pub fn stabilization(&self) -> usize {
        self.stabilization
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn candidate(&self) -> &BigInt {
        &self.candidate
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    /// The unsigned view `(candidate mod modulus, modulus)`.
    pub fn current(&self) -> ResiduePair {
        ResiduePair::reduced(&self.candidate, self.modulus.clone())
    }

    pub fn update(&mut self, v: u64, p: u64, stats: &mut RunStats) -> Result<()> {
        if rem_u64(&self.candidate, p) == v {
            self.stabilization += 1;
            self.modulus *= p;
            stats.stabilizations += 1;
        } else {
            self.stabilization = 0;
            let current = ResiduePair::reduced(&self.candidate, self.modulus.clone());
            if !self.modulus.is_one() {
                let words = self.modulus.bits().div_ceil(64).max(1);
                stats.record_combine(shelf_level_of(&self.modulus), words);
            }
            let lifted = crt_pair(&current, &ResiduePair::from_u64(v, p))?;
            let (residue, modulus) = lifted.into_parts();
            self.candidate = symmetric_rem(&BigInt::from(residue), &modulus);
            self.modulus = modulus;
        }
        Ok(())
    }

    pub fn not_terminated(&self) -> bool {
        self.stabilization < self.threshold
    }
}

fn shelf_level_of(modulus: &BigUint) -> usize {
    if modulus.is_one() {
        0
    } else {
        shelf_level(modulus, crate::ladder::DEFAULT_WORD_BITS)
    }
}

// ---------------------------------------------------------------------------
// Deterministic vector strategy.

/// Deterministic builder for a scalar or vector target with a known bound
/// `B >= max |entry|`: keeps inserting until the modulus product exceeds
/// `2B`, at which point the symmetric representatives are exact.
pub struct FullMultipBuilder {
    ladder: RadixLadder<VectorPair>,
    product: BigUint,
    twice_bound: BigUint,
    dimension: usize,
}

impl FullMultipBuilder {
    pub fn new(bound: BigUint, dimension: usize) -> Self {
        assert!(!bound.is_zero(), "bound must be >= 1");
        assert!(dimension >= 1);
        FullMultipBuilder {
            ladder: RadixLadder::new(),
            product: BigUint::one(),
            twice_bound: bound << 1,
            dimension,
        }
    }

    pub fn modulus_product(&self) -> &BigUint {
        &self.product
    }
}

impl Builder for FullMultipBuilder {
    type Output = Vec<BigInt>;

    fn initialize(&mut self) {
        self.ladder = RadixLadder::new();
        self.product = BigUint::one();
    }

    fn update(&mut self, value: &[u64], p: u64, stats: &mut RunStats) -> Result<()> {
        expect_dimension(value, self.dimension)?;
        self.ladder.insert(VectorPair::from_u64(value, p), stats)?;
        self.product *= p;
        stats.primes_used += 1;
        Ok(())
    }

    fn not_terminated(&mut self, _probe: &mut Probe<'_>) -> Result<bool> {
        Ok(self.product <= self.twice_bound)
    }

    fn reconstruct(&mut self, stats: &mut RunStats) -> Result<Vec<BigInt>> {
        let total = self.ladder.collapse(stats)?;
        stats.modulus_bits = total.modulus.bits();
        Ok(total
            .residues
            .iter()
            .map(|r| symmetric_rem(&BigInt::from(r.clone()), &total.modulus))
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Earliest termination, scalar.

/// Scalar early-termination builder: every apply is reused, termination
/// after `ET` consecutive stabilizations.
pub struct EarlySingleBuilder {
    state: EarlyState,
    threshold: usize,
}

impl EarlySingleBuilder {
    pub fn new(threshold: usize) -> Self {
        EarlySingleBuilder {
            state: EarlyState::new(threshold),
            threshold,
        }
    }

    pub fn state(&self) -> &EarlyState {
        &self.state
    }
}

impl Builder for EarlySingleBuilder {
    type Output = BigInt;

    fn initialize(&mut self) {
        self.state = EarlyState::new(self.threshold);
    }

    fn update(&mut self, value: &[u64], p: u64, stats: &mut RunStats) -> Result<()> {
        let v = expect_scalar(value)?;
        self.state.update(v, p, stats)?;
        stats.primes_used += 1;
        Ok(())
    }

    fn not_terminated(&mut self, probe: &mut Probe<'_>) -> Result<bool> {
        let more = self.state.not_terminated();
        if !more {
            probe.stats.terminated_early = true;
        }
        Ok(more)
    }

    fn reconstruct(&mut self, stats: &mut RunStats) -> Result<BigInt> {
        stats.modulus_bits = self.state.modulus().bits();
        Ok(self.state.candidate().clone())
    }
}

// ---------------------------------------------------------------------------
// Early termination for vectors via a linear combination.

/// Vector builder combining full vector storage with early termination on
/// the scalar `sum(c_i * v_i) mod p` for fixed random coefficients `c`.
///
/// Termination is probabilistic twice over: the combination may stabilize
/// before every entry has; the coefficient seed is exposed so adversarial
/// cases stay reproducible.
pub struct EarlyMultipBuilder {
    ladder: RadixLadder<VectorPair>,
    state: EarlyState,
    coefficients: Vec<u64>,
    threshold: usize,
}

impl EarlyMultipBuilder {
    /// Coefficients drawn uniformly from `[1, 2^16)` using the given seed.
    pub fn new(dimension: usize, coefficient_seed: u64, threshold: usize) -> Self {
        assert!(dimension >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(coefficient_seed);
        let coefficients = (0..dimension).map(|_| rng.gen_range(1..1u64 << 16)).collect();
        Self::with_coefficients(coefficients, threshold)
    }

    pub fn with_coefficients(coefficients: Vec<u64>, threshold: usize) -> Self {
        assert!(!coefficients.is_empty());
        EarlyMultipBuilder {
            ladder: RadixLadder::new(),
            state: EarlyState::new(threshold),
            coefficients,
            threshold,
        }
    }

    pub fn coefficients(&self) -> &[u64] {
        &self.coefficients
    }

    fn combine_entries(&self, value: &[u64], p: u64) -> u64 {
        let mut acc = 0u128;
        for (c, v) in self.coefficients.iter().zip(value) {
            acc = (acc + *c as u128 * *v as u128) % p as u128;
        }
        acc as u64
    }
}

impl Builder for EarlyMultipBuilder {
    type Output = Vec<BigInt>;

    fn initialize(&mut self) {
        self.ladder = RadixLadder::new();
        self.state = EarlyState::new(self.threshold);
    }

    fn update(&mut self, value: &[u64], p: u64, stats: &mut RunStats) -> Result<()> {
        expect_dimension(value, self.coefficients.len())?;
        let combined = self.combine_entries(value, p);
        self.state.update(combined, p, stats)?;
        self.ladder.insert(VectorPair::from_u64(value, p), stats)?;
        stats.primes_used += 1;
        Ok(())
    }

    fn not_terminated(&mut self, probe: &mut Probe<'_>) -> Result<bool> {
        let more = self.state.not_terminated();
        if !more {
            probe.stats.terminated_early = true;
        }
        Ok(more)
    }

    fn reconstruct(&mut self, stats: &mut RunStats) -> Result<Vec<BigInt>> {
        let total = self.ladder.collapse(stats)?;
        stats.modulus_bits = total.modulus.bits();
        Ok(total
            .residues
            .iter()
            .map(|r| symmetric_rem(&BigInt::from(r.clone()), &total.modulus))
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Balanced termination.

/// Confirms the lone occupant of a ladder against `threshold` fresh random
/// primes. Returns `Ok(false)` ("terminated") only if every draw matches
/// the occupant's signed representative.
fn confirm_lone_occupant(
    candidate: &BigInt,
    threshold: usize,
    probe: &mut Probe<'_>,
) -> Result<bool> {
    for _ in 0..threshold {
        let p = probe.generator.next_random()?;
        let v = probe.blackbox.apply(p);
        probe.stats.applies += 1;
        if rem_u64(candidate, p) != v[0] {
            return Ok(true);
        }
        probe.stats.stabilizations += 1;
    }
    Ok(false)
}

/// Ladder-backed scalar builder testing for termination only when a single
/// shelf is occupied, i.e. when the residue count is a power of two; all
/// combinations are then between equal size classes.
pub struct EarlyBalancedBuilder {
    ladder: RadixLadder<ResiduePair>,
    threshold: usize,
    terminated: bool,
}

impl EarlyBalancedBuilder {
    pub fn new(threshold: usize) -> Self {
        assert!(threshold >= 1);
        EarlyBalancedBuilder {
            ladder: RadixLadder::new(),
            threshold,
            terminated: false,
        }
    }

    pub fn ladder(&self) -> &RadixLadder<ResiduePair> {
        &self.ladder
    }
}

impl Builder for EarlyBalancedBuilder {
    type Output = BigInt;

    fn initialize(&mut self) {
        self.ladder = RadixLadder::new();
        self.terminated = false;
    }

    fn update(&mut self, value: &[u64], p: u64, stats: &mut RunStats) -> Result<()> {
        let v = expect_scalar(value)?;
        self.ladder.insert(ResiduePair::from_u64(v, p), stats)?;
        stats.primes_used += 1;
        Ok(())
    }

    fn not_terminated(&mut self, probe: &mut Probe<'_>) -> Result<bool> {
        let lone = match self.ladder.lone_occupant() {
            Some(pair) => pair,
            None => return Ok(true),
        };
        let candidate = symmetric_rem(&BigInt::from(lone.residue().clone()), lone.modulus());
        let more = confirm_lone_occupant(&candidate, self.threshold, probe)?;
        if !more {
            self.terminated = true;
            probe.stats.terminated_early = true;
        }
        Ok(more)
    }

    fn reconstruct(&mut self, stats: &mut RunStats) -> Result<BigInt> {
        let total = self.ladder.collapse(stats)?;
        stats.modulus_bits = total.modulus().bits();
        Ok(symmetric_rem(
            &BigInt::from(total.residue().clone()),
            total.modulus(),
        ))
    }
}

// ---------------------------------------------------------------------------
// Amortized termination.

/// Checkpoint schedule for the amortized strategy: tests happen at residue
/// counts `ceil(rho^g(i))`, `1 < rho < 2`, merged with the exact powers of
/// two so no test ever lags behind the balanced schedule. Where ceiling
/// rounding stretches a gap past the `rho - 1` growth ratio, a repair point
/// `floor(rho * s)` is inserted; gaps landing exactly on the next power of
/// two are left alone, which keeps the `rho -> 2` limit identical to the
/// balanced power-of-two schedule.
#[derive(Debug, Clone)]
pub struct AmortizedSchedule {
    rho: f64,
    g: fn(u32) -> u32,
}

pub const DEFAULT_RHO: f64 = 1.5;

impl AmortizedSchedule {
    pub fn new(rho: f64) -> Result<Self> {
        Self::with_g(rho, |i| i)
    }

    /// `g` must be nondecreasing with `g(i) <= i`; the identity recovers the
    /// plain `rho^i` schedule.
    pub fn with_g(rho: f64, g: fn(u32) -> u32) -> Result<Self> {
        if !(rho > 1.0 && rho < 2.0) {
            return Err(CraError::InvalidRho(rho));
        }
        Ok(AmortizedSchedule { rho, g })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    fn rho_checkpoint(&self, i: u32) -> u64 {
        let gi = (self.g)(i);
        debug_assert!(gi <= i, "g(i) must not exceed i");
        self.rho.powi(gi as i32).ceil() as u64
    }
}

/// The deduplicated, sorted checkpoint list up to `horizon`.
pub fn amortized_checkpoints(schedule: &AmortizedSchedule, horizon: u64) -> Vec<u64> {
    assert!(horizon >= 1);
    let mut raw = Vec::new();
    let mut i = 1u32;
    loop {
        let cp = schedule.rho_checkpoint(i);
        if cp > horizon || i > 4096 {
            break;
        }
        raw.push(cp);
        i += 1;
    }
    let mut pow2 = 2u64;
    while pow2 <= horizon {
        raw.push(pow2);
        match pow2.checked_mul(2) {
            Some(next) => pow2 = next,
            None => break,
        }
    }
    raw.sort_unstable();
    raw.dedup();

    let rho = schedule.rho;
    let mut out: Vec<u64> = Vec::with_capacity(raw.len());
    for v in raw {
        if let Some(&s) = out.last() {
            let stretched = (v - s) as f64 > (rho - 1.0) * s as f64 + 1e-9;
            if stretched && v > s + 1 && !v.is_power_of_two() {
                let repair = ((rho * s as f64).floor() as u64).clamp(s + 1, v - 1);
                out.push(repair);
            }
        }
        out.push(v);
    }
    out
}

/// Ladder-backed scalar builder with amortized termination checkpoints.
pub struct AmortizedBuilder {
    ladder: RadixLadder<ResiduePair>,
    schedule: AmortizedSchedule,
    threshold: usize,
    count: u64,
    next_checkpoint: u64,
    checkpoints: Vec<u64>,
    horizon: u64,
    finished: Option<ResiduePair>,
}

impl AmortizedBuilder {
    pub fn new(schedule: AmortizedSchedule, threshold: usize) -> Self {
        assert!(threshold >= 1);
        let horizon = 16;
        let checkpoints = amortized_checkpoints(&schedule, horizon);
        let mut builder = AmortizedBuilder {
            ladder: RadixLadder::new(),
            schedule,
            threshold,
            count: 0,
            next_checkpoint: 0,
            checkpoints,
            horizon,
            finished: None,
        };
        builder.next_checkpoint = builder.first_checkpoint_after(0);
        builder
    }

    /// Smallest checkpoint strictly greater than `n`, extending the cached
    /// list as the run grows.
    fn first_checkpoint_after(&mut self, n: u64) -> u64 {
        while self.checkpoints.last().is_none_or(|&last| last <= n.saturating_mul(2)) {
            self.horizon = self.horizon.saturating_mul(4).max(16);
            self.checkpoints = amortized_checkpoints(&self.schedule, self.horizon);
        }
        *self
            .checkpoints
            .iter()
            .find(|&&c| c > n)
            .expect("horizon extends past n")
    }
}

impl Builder for AmortizedBuilder {
    type Output = BigInt;

    fn initialize(&mut self) {
        self.ladder = RadixLadder::new();
        self.count = 0;
        self.next_checkpoint = self.first_checkpoint_after(0);
        self.finished = None;
    }

    fn update(&mut self, value: &[u64], p: u64, stats: &mut RunStats) -> Result<()> {
        let v = expect_scalar(value)?;
        self.ladder.insert(ResiduePair::from_u64(v, p), stats)?;
        self.count += 1;
        stats.primes_used += 1;
        Ok(())
    }

    fn not_terminated(&mut self, probe: &mut Probe<'_>) -> Result<bool> {
        if self.count < self.next_checkpoint {
            return Ok(true);
        }
        self.next_checkpoint = self.first_checkpoint_after(self.count);
        let total = self.ladder.collapse(probe.stats)?;
        let candidate = symmetric_rem(&BigInt::from(total.residue().clone()), total.modulus());
        if confirm_lone_occupant(&candidate, self.threshold, probe)? {
            // Check failed: put the combined pair back and keep going.
            self.ladder.insert(total, probe.stats)?;
            Ok(true)
        } else {
            self.finished = Some(total);
            probe.stats.terminated_early = true;
            Ok(false)
        }
    }

    fn reconstruct(&mut self, stats: &mut RunStats) -> Result<BigInt> {
        let total = match self.finished.take() {
            Some(pair) => pair,
            None => self.ladder.collapse(stats)?,
        };
        stats.modulus_bits = total.modulus().bits();
        Ok(symmetric_rem(
            &BigInt::from(total.residue().clone()),
            total.modulus(),
        ))
    }
}

// ---------------------------------------------------------------------------
// Strategy dispatch for scalar targets.

/// Any of the five strategies behind one scalar-output builder, for callers
/// selecting the strategy at runtime.
pub enum ScalarBuilder {
    Full(FullMultipBuilder),
    Single(EarlySingleBuilder),
    Multi(EarlyMultipBuilder),
    Balanced(EarlyBalancedBuilder),
    Amortized(AmortizedBuilder),
}

/// Builds the selected strategy. `bound` is required for the deterministic
/// strategy and ignored elsewhere; `rho` only matters for the amortized
/// schedule.
pub fn scalar_builder(
    strategy: Strategy,
    et: usize,
    rho: f64,
    bound: Option<&BigUint>,
    coefficient_seed: u64,
) -> Result<ScalarBuilder> {
    Ok(match strategy {
        Strategy::Deterministic => {
            let bound = bound.ok_or(CraError::MissingBound)?;
            ScalarBuilder::Full(FullMultipBuilder::new(bound.clone().max(BigUint::one()), 1))
        }
        Strategy::Earliest => ScalarBuilder::Single(EarlySingleBuilder::new(et)),
        Strategy::Multi => ScalarBuilder::Multi(EarlyMultipBuilder::new(1, coefficient_seed, et)),
        Strategy::Balanced => ScalarBuilder::Balanced(EarlyBalancedBuilder::new(et)),
        Strategy::Amortized => {
            ScalarBuilder::Amortized(AmortizedBuilder::new(AmortizedSchedule::new(rho)?, et))
        }
    })
}

impl Builder for ScalarBuilder {
    type Output = BigInt;

    fn initialize(&mut self) {
        match self {
            ScalarBuilder::Full(b) => b.initialize(),
            ScalarBuilder::Single(b) => b.initialize(),
            ScalarBuilder::Multi(b) => b.initialize(),
            ScalarBuilder::Balanced(b) => b.initialize(),
            ScalarBuilder::Amortized(b) => b.initialize(),
        }
    }

    fn update(&mut self, value: &[u64], p: u64, stats: &mut RunStats) -> Result<()> {
        match self {
            ScalarBuilder::Full(b) => b.update(value, p, stats),
            ScalarBuilder::Single(b) => b.update(value, p, stats),
            ScalarBuilder::Multi(b) => b.update(value, p, stats),
            ScalarBuilder::Balanced(b) => b.update(value, p, stats),
            ScalarBuilder::Amortized(b) => b.update(value, p, stats),
        }
    }

    fn not_terminated(&mut self, probe: &mut Probe<'_>) -> Result<bool> {
        match self {
            ScalarBuilder::Full(b) => b.not_terminated(probe),
            ScalarBuilder::Single(b) => b.not_terminated(probe),
            ScalarBuilder::Multi(b) => b.not_terminated(probe),
            ScalarBuilder::Balanced(b) => b.not_terminated(probe),
            ScalarBuilder::Amortized(b) => b.not_terminated(probe),
        }
    }

    fn reconstruct(&mut self, stats: &mut RunStats) -> Result<BigInt> {
        match self {
            ScalarBuilder::Full(b) => Ok(b.reconstruct(stats)?.swap_remove(0)),
            ScalarBuilder::Single(b) => b.reconstruct(stats),
            ScalarBuilder::Multi(b) => Ok(b.reconstruct(stats)?.swap_remove(0)),
            ScalarBuilder::Balanced(b) => b.reconstruct(stats),
            ScalarBuilder::Amortized(b) => b.reconstruct(stats),
        }
    }
}
