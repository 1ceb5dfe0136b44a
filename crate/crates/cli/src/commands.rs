//! Command implementations behind the thin argument-parsing front end, so
//! they stay directly testable.

use std::time::{Duration, Instant};

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use sha2::{Digest, Sha256};
use thiserror::Error;

use cra::blackbox::{
    hadamard_bound, DelayBlackBox, DenseIntMatrix, DetBlackBox, KnownIntegerOracle,
    MatVecBlackBox, ResidueBlackBox,
};
use cra::builders::{
    scalar_builder, Builder, EarlyMultipBuilder, FullMultipBuilder, Strategy,
};
use cra::controller::{run, RunStats};
use cra::error::CraError;
use cra::parallel::{run_parallel, ParallelOptions};
use cra::primes::{PrimeGenerator, PrimeMode};

use crate::sms::{parse_sms, SmsError, SmsFile};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Sms(#[from] SmsError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Internal(String),
}

impl From<CraError> for CliError {
    fn from(e: CraError) -> Self {
        match e {
            // Running out of primes means the requested prime size cannot
            // cover the target: an input problem, not a bug.
            CraError::Exhausted { .. } => CliError::Usage(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl CliError {
    /// 1 for input errors, 2 for internal failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Sms(_) | CliError::Io(_) | CliError::Usage(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

/// Everything a single reconstruction run needs, resolved from the flags.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub strategy: Strategy,
    pub et: usize,
    pub rho: f64,
    pub bound: Option<BigUint>,
    pub seed: u64,
    pub prime_bits: u32,
    /// Worker threads; 0 runs the sequential controller.
    pub threads: usize,
    pub batch: usize,
    pub sync_every: usize,
    pub apply_delay: Option<Duration>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            strategy: Strategy::Earliest,
            et: 2,
            rho: 1.5,
            bound: None,
            seed: 1,
            prime_bits: 31,
            threads: 0,
            batch: 4,
            sync_every: 1,
        apply_delay: None,
        }
    }
}

impl RunSettings {
    fn coefficient_seed(&self) -> u64 {
        self.seed ^ 0x9e37_79b9_7f4a_7c15
    }

    fn generator(&self) -> PrimeGenerator {
        PrimeGenerator::with_config(self.seed, self.prime_bits, PrimeMode::Random)
    }

    fn parallel_options(&self) -> ParallelOptions {
        ParallelOptions {
            workers: self.threads,
            batch: self.batch,
            sync_every: self.sync_every,
        }
    }
}

fn drive<B: Builder>(
    blackbox: &(dyn ResidueBlackBox + Sync),
    builder: &mut B,
    settings: &RunSettings,
) -> Result<(B::Output, RunStats), CraError> {
    let mut generator = settings.generator();
    match settings.apply_delay {
        Some(delay) => {
            let delayed = DelayBlackBox::new(blackbox, delay);
            if settings.threads == 0 {
                run(&delayed, builder, &mut generator)
            } else {
                run_parallel(&delayed, builder, &mut generator, settings.parallel_options())
            }
        }
        None => {
            if settings.threads == 0 {
                run(blackbox, builder, &mut generator)
            } else {
                run_parallel(blackbox, builder, &mut generator, settings.parallel_options())
            }
        }
    }
}

/// Runs the configured strategy against a scalar black box.
pub fn run_scalar(
    blackbox: &(dyn ResidueBlackBox + Sync),
    settings: &RunSettings,
) -> Result<(BigInt, RunStats), CliError> {
    let mut builder = scalar_builder(
        settings.strategy,
        settings.et,
        settings.rho,
        settings.bound.as_ref(),
        settings.coefficient_seed(),
    )?;
    Ok(drive(blackbox, &mut builder, settings)?)
}

/// Runs a vector-capable strategy (deterministic or multi) against a
/// vector black box.
pub fn run_vector(
    blackbox: &(dyn ResidueBlackBox + Sync),
    settings: &RunSettings,
    dimension: usize,
) -> Result<(Vec<BigInt>, RunStats), CliError> {
    match settings.strategy {
        Strategy::Deterministic => {
            let bound = settings
                .bound
                .clone()
                .ok_or(CraError::MissingBound)?
                .max(BigUint::one());
            let mut builder = FullMultipBuilder::new(bound, dimension);
            Ok(drive(blackbox, &mut builder, settings)?)
        }
        Strategy::Multi => {
            let mut builder =
                EarlyMultipBuilder::new(dimension, settings.coefficient_seed(), settings.et);
            Ok(drive(blackbox, &mut builder, settings)?)
        }
        other => Err(CliError::Usage(format!(
            "strategy {other} reconstructs a single value; use deterministic or multi \
             for vector targets"
        ))),
    }
}

/// Stats serialization used by `--stats`: one JSON object per run.
pub fn stats_json(stats: &RunStats) -> String {
    serde_json::json!({
        "applies": stats.applies,
        "primes_used": stats.primes_used,
        "modulus_bits": stats.modulus_bits,
        "terminated_early": stats.terminated_early,
        "wall_ms": stats.wall_ms,
    })
    .to_string()
}

#[derive(Debug)]
pub struct DetReport {
    pub determinant: BigInt,
    pub stats: RunStats,
}

/// Exact signed determinant of a square SMS matrix.
pub fn cmd_det(sms: &SmsFile, settings: &RunSettings) -> Result<DetReport, CliError> {
    let matrix = sms.to_dense()?;
    let mut settings = settings.clone();
    if settings.strategy == Strategy::Deterministic && settings.bound.is_none() {
        settings.bound = Some(hadamard_bound(&matrix));
    }
    let blackbox = DetBlackBox::new(matrix);
    let (determinant, stats) = run_scalar(&blackbox, &settings)?;
    Ok(DetReport { determinant, stats })
}

#[derive(Debug)]
pub struct MatVecReport {
    pub product: Vec<BigInt>,
    pub stats: RunStats,
}

/// Exact matrix-vector product of a square SMS matrix and a dense vector.
pub fn cmd_matvec(
    sms: &SmsFile,
    rhs: &[BigInt],
    settings: &RunSettings,
) -> Result<MatVecReport, CliError> {
    let matrix = sms.to_dense()?;
    if rhs.len() != matrix.n() {
        return Err(CliError::Usage(format!(
            "right-hand side has {} entries, matrix needs {}",
            rhs.len(),
            matrix.n()
        )));
    }
    let mut settings = settings.clone();
    if settings.strategy == Strategy::Deterministic && settings.bound.is_none() {
        settings.bound = Some(matvec_bound(&matrix, rhs));
    }
    let dimension = matrix.n();
    let blackbox = MatVecBlackBox::new(matrix, rhs.to_vec());
    let (product, stats) = run_vector(&blackbox, &settings, dimension)?;
    Ok(MatVecReport { product, stats })
}

/// Entrywise magnitude bound on `A * b`: the largest row sum of |A_ij b_j|.
fn matvec_bound(matrix: &DenseIntMatrix, rhs: &[BigInt]) -> BigUint {
    let mut best = BigUint::one();
    for i in 0..matrix.n() {
        let mut row = BigUint::zero();
        for (j, b) in rhs.iter().enumerate() {
            row += (matrix.entry(i, j) * b).magnitude();
        }
        best = best.max(row);
    }
    best
}

/// Reconstructs a known integer through the full machinery (demo oracle).
pub fn cmd_reconstruct(
    value: &BigInt,
    settings: &RunSettings,
) -> Result<(BigInt, RunStats), CliError> {
    let mut settings = settings.clone();
    if settings.strategy == Strategy::Deterministic && settings.bound.is_none() {
        settings.bound = Some(value.magnitude().clone().max(BigUint::one()));
    }
    let blackbox = KnownIntegerOracle::new(value.clone());
    run_scalar(&blackbox, &settings)
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub strategy: Strategy,
    pub threads: usize,
    pub wall_s: f64,
    pub applies: u64,
    pub primes_used: u64,
    pub digest: String,
}

#[derive(Debug)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

fn digest16(value: &BigInt) -> String {
    let hash = Sha256::digest(value.to_string().as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// One determinant run per (strategy, threads) combination. Every row must
/// agree on the result digest; a mismatch is an internal error.
pub fn cmd_bench(
    sms: &SmsFile,
    strategies: &[Strategy],
    thread_counts: &[usize],
    settings: &RunSettings,
) -> Result<BenchReport, CliError> {
    if strategies.is_empty() {
        return Err(CliError::Usage("no strategies selected".into()));
    }
    if thread_counts.is_empty() {
        return Err(CliError::Usage("no thread counts selected".into()));
    }
    let mut rows = Vec::new();
    for &strategy in strategies {
        for &threads in thread_counts {
            let mut per_run = settings.clone();
            per_run.strategy = strategy;
            per_run.threads = threads;
            let start = Instant::now();
            let report = cmd_det(sms, &per_run)?;
            let wall_s = start.elapsed().as_secs_f64();
            rows.push(BenchRow {
                strategy,
                threads,
                wall_s,
                applies: report.stats.applies,
                primes_used: report.stats.primes_used,
                digest: digest16(&report.determinant),
            });
        }
    }
    let first = rows[0].digest.clone();
    if let Some(bad) = rows.iter().find(|r| r.digest != first) {
        return Err(CliError::Internal(format!(
            "benchmark rows disagree: {}/{} threads produced digest {} != {}",
            bad.strategy, bad.threads, bad.digest, first
        )));
    }
    Ok(BenchReport { rows })
}

/// Seeded random dense matrix rendered as an SMS file, for `bench --random`.
pub fn random_sms(n: usize, bits: u32, seed: u64) -> SmsFile {
    use rand::{Rng, SeedableRng};
    assert!(n >= 1 && bits >= 1);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x00d1_ce00_0f00_d00d);
    let mut triplets = Vec::with_capacity(n * n);
    for i in 1..=n {
        for j in 1..=n {
            let mut value = BigInt::zero();
            for _ in 0..bits {
                value = (value << 1u32) + BigInt::from(rng.gen_range(0..=1u8));
            }
            if rng.gen_bool(0.5) {
                value = -value;
            }
            if !value.is_zero() {
                triplets.push((i, j, value));
            }
        }
    }
    SmsFile {
        nrows: n,
        ncols: n,
        triplets,
    }
}

/// Parses a whitespace-separated list of signed integers (matvec rhs).
pub fn parse_int_list(text: &str) -> Result<Vec<BigInt>, CliError> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<BigInt>()
                .map_err(|_| CliError::Usage(format!("not an integer: {tok}")))
        })
        .collect()
}

pub fn load_sms_file(path: &std::path::Path) -> Result<SmsFile, CliError> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_sms(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sequential(strategy: Strategy) -> RunSettings {
        RunSettings {
            strategy,
            threads: 0,
            ..RunSettings::default()
        }
    }

    #[test]
    fn det_of_the_spec_matrix_is_three_for_every_strategy() {
        let sms = parse_sms("2 2 M\n1 1 2\n1 2 1\n2 1 1\n2 2 2\n0 0 0").unwrap();
        for strategy in Strategy::ALL {
            let report = cmd_det(&sms, &sequential(strategy)).unwrap();
            assert_eq!(report.determinant, BigInt::from(3), "{strategy}");
            assert!(report.stats.applies >= 1);
        }
    }

    #[test]
    fn det_identity_is_one() {
        let sms = parse_sms("3 3 M\n1 1 1\n2 2 1\n3 3 1\n0 0 0").unwrap();
        let report = cmd_det(&sms, &sequential(Strategy::Deterministic)).unwrap();
        assert_eq!(report.determinant, BigInt::one());
        assert!(!report.stats.terminated_early);
    }

    #[test]
    fn matvec_rejects_scalar_strategies_and_bad_lengths() {
        let sms = parse_sms("2 2 M\n1 1 1\n2 2 1\n0 0 0").unwrap();
        let rhs = vec![BigInt::from(4), BigInt::from(-5)];
        let err = cmd_matvec(&sms, &rhs, &sequential(Strategy::Earliest)).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        let err = cmd_matvec(&sms, &rhs[..1], &sequential(Strategy::Multi)).unwrap_err();
        assert_eq!(err.exit_code(), 1);

        let report = cmd_matvec(&sms, &rhs, &sequential(Strategy::Multi)).unwrap();
        assert_eq!(report.product, rhs);
    }

    #[test]
    fn bench_validates_inputs_and_agrees_with_itself() {
        let sms = random_sms(4, 10, 5);
        let err = cmd_bench(&sms, &[], &[0], &RunSettings::default()).unwrap_err();
        assert_eq!(err.exit_code(), 1);

        let report = cmd_bench(
            &sms,
            &[Strategy::Earliest, Strategy::Amortized],
            &[0, 1],
            &sequential(Strategy::Earliest),
        )
        .unwrap();
        assert_eq!(report.rows.len(), 4);
        assert!(report.rows.iter().all(|r| r.digest == report.rows[0].digest));
    }

    #[test]
    fn bench_with_apply_delay_shows_parallel_speedup() {
        // ~2000-bit determinant needs ~65 primes; a 10 ms apply delay makes
        // the wall clock track the apply schedule, so 4 workers beat 1 by
        // at least 2x.
        let sms = random_sms(2, 1000, 8);
        let settings = RunSettings {
            apply_delay: Some(std::time::Duration::from_millis(10)),
            ..RunSettings::default()
        };
        let report = cmd_bench(&sms, &[Strategy::Earliest], &[1, 4], &settings).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[0].digest, report.rows[1].digest);
        let speedup = report.rows[0].wall_s / report.rows[1].wall_s;
        assert!(
            speedup >= 2.0,
            "speedup {speedup:.2} (walls {:.3}s vs {:.3}s)",
            report.rows[0].wall_s,
            report.rows[1].wall_s
        );
    }

    #[test]
    fn exit_codes_partition_input_and_internal_errors() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::Sms(SmsError::MissingTerminator).exit_code(), 1);
        assert_eq!(CliError::Internal("x".into()).exit_code(), 2);
        assert_eq!(
            CliError::from(CraError::Exhausted { bit_size: 3 }).exit_code(),
            1
        );
        assert_eq!(CliError::from(CraError::EmptyLadder).exit_code(), 2);
    }

    #[test]
    fn reconstruct_handles_zero_and_negatives() {
        for value in [BigInt::zero(), BigInt::from(-7), BigInt::from(9_999_991)] {
            for strategy in Strategy::ALL {
                let (got, _) = cmd_reconstruct(&value, &sequential(strategy)).unwrap();
                assert_eq!(got, value, "{strategy}");
            }
        }
    }

    #[test]
    fn parse_int_list_handles_whitespace_and_signs() {
        let got = parse_int_list(" 4\n-5\t6 ").unwrap();
        assert_eq!(got, vec![BigInt::from(4), BigInt::from(-5), BigInt::from(6)]);
        assert!(parse_int_list("4 x").is_err());
    }
}
