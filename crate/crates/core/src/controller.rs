//! Sequential reconstruction controller, instrumentation counters and the
//! word-operation cost model.

use std::time::Instant;

use crate::blackbox::ResidueBlackBox;
use crate::builders::{Builder, Probe, Strategy};
use crate::error::{CraError, Result};
use crate::primes::PrimeGenerator;

/// Counters observed during one reconstruction run.
///
/// `applies` counts black-box invocations (including termination probes and
/// parallel oversteal); `primes_used` counts only the primes folded into the
/// final modulus — the `[k]` reported by the CLI.
#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub applies: u64,
    pub primes_used: u64,
    pub stabilizations: u64,
    pub terminated_early: bool,
    pub modulus_bits: u64,
    /// Pair combinations per ladder level (index = level).
    pub combines_by_level: Vec<u64>,
    /// Word size of the larger operand of each combination, in order.
    pub combine_words: Vec<u64>,
    pub wall_ms: f64,
}

impl RunStats {
    pub fn record_combine(&mut self, level: usize, words: u64) {
        if self.combines_by_level.len() <= level {
            self.combines_by_level.resize(level + 1, 0);
        }
        self.combines_by_level[level] += 1;
        self.combine_words.push(words);
    }

    /// Everything except wall time, for determinism comparisons.
    pub fn counters(&self) -> (u64, u64, u64, bool, u64, &[u64], &[u64]) {
        (
            self.applies,
            self.primes_used,
            self.stabilizations,
            self.terminated_early,
            self.modulus_bits,
            &self.combines_by_level,
            &self.combine_words,
        )
    }
}

/// Integer arithmetic cost model: multiplication of size-`l` operands costs
/// `m_alpha * l^alpha` word operations, division `d_alpha * l^alpha`.
#[derive(Debug, Clone, Copy)]
pub struct CostModel {
    pub m_alpha: f64,
    pub d_alpha: f64,
    pub alpha: f64,
    pub beta: u32,
}

impl Default for CostModel {
    /// Classical multiplication (`2 l^2`) and division (`3 l^2`) on 64-bit
    /// words.
    fn default() -> Self {
        CostModel {
            m_alpha: 2.0,
            d_alpha: 3.0,
            alpha: 2.0,
            beta: 64,
        }
    }
}

impl CostModel {
    pub fn validate(&self) {
        assert!(self.alpha > 1.0 && self.alpha <= 2.0, "alpha must be in (1, 2]");
        assert!(self.m_alpha > 0.0 && self.d_alpha > 0.0);
    }
}

/// Predicted reconstruction cost in word operations, excluding black-box
/// apply time. Advisory only: never used for control flow.
///
/// * earliest: `4 (t + ET)^2`
/// * balanced: `(2^k)^alpha * (m_alpha + d_alpha) / (2^alpha - 2)` with
///   `k = ceil(log2 t)`
pub fn predict_cost(model: &CostModel, strategy: Strategy, t: u64, et: u64) -> Result<f64> {
    model.validate();
    assert!(t >= 1, "predict_cost requires t >= 1");
    match strategy {
        Strategy::Earliest => {
            let n = (t + et) as f64;
            Ok(4.0 * n * n)
        }
        Strategy::Balanced => {
            let k = ceil_log2(t);
            let pow = (1u64 << k) as f64;
            Ok(pow.powf(model.alpha) * (model.m_alpha + model.d_alpha)
                / (2f64.powf(model.alpha) - 2.0))
        }
        other => Err(CraError::UnsupportedStrategy(other.name())),
    }
}

pub(crate) fn ceil_log2(n: u64) -> u32 {
    debug_assert!(n >= 1);
    n.next_power_of_two().trailing_zeros()
}

/// Runs the reconstruction loop: while the builder has not terminated, draw
/// a fresh prime, apply the black box, update the builder; then reconstruct.
pub fn run<B: Builder>(
    blackbox: &dyn ResidueBlackBox,
    builder: &mut B,
    generator: &mut PrimeGenerator,
) -> Result<(B::Output, RunStats)> {
    let mut stats = RunStats::default();
    let start = Instant::now();
    builder.initialize();
    loop {
        let keep_going = builder.not_terminated(&mut Probe {
            blackbox,
            generator,
            stats: &mut stats,
        })?;
        if !keep_going {
            break;
        }
        let p = generator.next_coprime()?;
        let v = blackbox.apply(p);
        stats.applies += 1;
        builder.update(&v, p, &mut stats)?;
    }
    let out = builder.reconstruct(&mut stats)?;
    stats.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((out, stats))
}
