//! Cross-strategy behavior of the sequential controller: correctness on
//! random targets, determinism, and combine-size profiles.

use num_bigint::{BigInt, BigUint};
use num_traits::Signed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cra::blackbox::{DetBlackBox, DenseIntMatrix, KnownIntegerOracle, MatVecBlackBox};
use cra::builders::{
    scalar_builder, EarlyBalancedBuilder, EarlyMultipBuilder, EarlySingleBuilder,
    FullMultipBuilder, Strategy,
};
use cra::controller::{run, RunStats};
use cra::primes::PrimeGenerator;

fn run_scalar(strategy: Strategy, target: &BigInt, seed: u64, et: usize) -> (BigInt, RunStats) {
    let bb = KnownIntegerOracle::new(target.clone());
    let bound = target.abs().to_biguint().unwrap().max(BigUint::from(1u32));
    let mut builder = scalar_builder(strategy, et, 1.5, Some(&bound), seed ^ 0x5eed).unwrap();
    let mut gen = PrimeGenerator::new(seed);
    run(&bb, &mut builder, &mut gen).unwrap()
}

fn random_target(rng: &mut ChaCha8Rng, bits: u64) -> BigInt {
    let mut v = BigInt::from(1);
    for _ in 0..bits {
        v = (v << 1u32) + BigInt::from(rng.gen_range(0..=1));
    }
    if rng.gen_bool(0.5) {
        -v
    } else {
        v
    }
}

#[test]
fn every_strategy_recovers_random_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200u64 {
        let bits = rng.gen_range(1..=1023);
        let target = random_target(&mut rng, bits);
        for strategy in Strategy::ALL {
            let (value, _) = run_scalar(strategy, &target, 1000 + case, 2);
            assert_eq!(value, target, "strategy {strategy} case {case} bits {bits}");
        }
    }
}

#[test]
fn earliest_known_integer_apply_count() {
    // R = 8 with 31-bit primes: the very first prime already exceeds 2|R|,
    // so t = 1 and the run costs t + ET applies.
    let (value, stats) = run_scalar(Strategy::Earliest, &BigInt::from(8), 424_242, 2);
    assert_eq!(value, BigInt::from(8));
    assert_eq!(stats.applies, 3);
    assert_eq!(stats.primes_used, 3);
    assert!(stats.terminated_early);
}

#[test]
fn deterministic_identity_determinant() {
    let bb = DetBlackBox::new(DenseIntMatrix::identity(10));
    let bound = cra::blackbox::hadamard_bound(bb.matrix());
    let mut builder = FullMultipBuilder::new(bound.max(BigUint::from(1u32)), 1);
    let mut gen = PrimeGenerator::new(7);
    let (value, stats) = run(&bb, &mut builder, &mut gen).unwrap();
    assert_eq!(value, vec![BigInt::from(1)]);
    assert!(!stats.terminated_early);
}

#[test]
fn multi_strategy_recovers_matrix_vector_product() {
    let a = DenseIntMatrix::new(
        2,
        vec![1, 2, 3, 4].into_iter().map(BigInt::from).collect(),
    );
    let b = vec![BigInt::from(1), BigInt::from(1)];
    let bb = MatVecBlackBox::new(a, b);
    let mut builder = EarlyMultipBuilder::new(2, 99, 2);
    let mut gen = PrimeGenerator::new(31);
    let (value, _) = run(&bb, &mut builder, &mut gen).unwrap();
    assert_eq!(value, vec![BigInt::from(3), BigInt::from(7)]);
}

#[test]
fn fixed_seed_runs_are_identical() {
    let target = random_target(&mut ChaCha8Rng::seed_from_u64(55), 400);
    for strategy in Strategy::ALL {
        let (v1, s1) = run_scalar(strategy, &target, 808, 2);
        let (v2, s2) = run_scalar(strategy, &target, 808, 2);
        assert_eq!(v1, v2);
        assert_eq!(s1.counters(), s2.counters(), "stats differ for {strategy}");
    }
}

#[test]
fn earliest_combines_grow_linearly() {
    // Every mismatch lift re-combines the whole accumulated modulus, so the
    // recorded operand sizes grow monotonically, one word at a time.
    let target = random_target(&mut ChaCha8Rng::seed_from_u64(9), 900);
    let bb = KnownIntegerOracle::new(target.clone());
    let mut builder = EarlySingleBuilder::new(2);
    let mut gen = PrimeGenerator::new(3);
    let (value, stats) = run(&bb, &mut builder, &mut gen).unwrap();
    assert_eq!(value, target);
    assert!(stats.combine_words.len() >= 20);
    for w in stats.combine_words.windows(2) {
        assert!(w[1] >= w[0], "combine sizes must not shrink: {:?}", w);
        assert!(w[1] - w[0] <= 1, "combine sizes grow one word at a time");
    }
    let last = *stats.combine_words.last().unwrap();
    let expected = 31 * stats.combine_words.len() as u64 / 64;
    assert!(last >= expected.saturating_sub(2) && last <= expected + 2);
}

#[test]
fn fixed_prime_stream_feeds_the_precomputed_chain() {
    // With a fixed modulus sequence the per-step inverses can be
    // precomputed once; only termination checks still need random primes.
    use cra::modarith::{build_chain, chain_reconstruct, crt_pair, rem_u64, ResiduePair};
    use cra::primes::PrimeMode;
    use num_bigint::BigUint;

    let target = random_target(&mut ChaCha8Rng::seed_from_u64(77), 500);
    let mut gen = PrimeGenerator::with_config(0, 31, PrimeMode::FixedSequence);
    let primes: Vec<u64> = (0..20).map(|_| gen.next_coprime().unwrap()).collect();
    let moduli: Vec<BigUint> = primes.iter().map(|&p| BigUint::from(p)).collect();
    let residues: Vec<BigUint> = primes
        .iter()
        .map(|&p| BigUint::from(rem_u64(&target, p)))
        .collect();

    let chain = build_chain(&moduli).unwrap();
    let got = chain_reconstruct(&chain, &residues).unwrap();

    let mut folded = ResiduePair::identity();
    for (r, p) in residues.iter().zip(&primes) {
        folded = crt_pair(&folded, &ResiduePair::new(r.clone(), BigUint::from(*p))).unwrap();
    }
    assert_eq!(got, folded);
    assert_eq!(
        cra::modarith::symmetric_rem(&got.residue().clone().into(), got.modulus()),
        target
    );
}

#[test]
fn balanced_runs_on_a_fixed_prime_stream() {
    let target = random_target(&mut ChaCha8Rng::seed_from_u64(78), 300);
    let bb = KnownIntegerOracle::new(target.clone());
    let mut builder = EarlyBalancedBuilder::new(2);
    let mut gen =
        PrimeGenerator::with_config(6, 31, cra::primes::PrimeMode::FixedSequence);
    let (value, stats) = run(&bb, &mut builder, &mut gen).unwrap();
    assert_eq!(value, target);
    assert!(stats.terminated_early);
}

#[test]
fn balanced_combines_halve_per_level() {
    // A 1900-bit target needs between 33 and 64 of any 31-bit primes, so the
    // balanced run stops at exactly 64 residues: 32 combines at level 0,
    // 16 at level 1, ... 1 at level 5.
    let target = random_target(&mut ChaCha8Rng::seed_from_u64(12), 1900);
    let bb = KnownIntegerOracle::new(target.clone());
    let mut builder = EarlyBalancedBuilder::new(2);
    let mut gen = PrimeGenerator::new(4);
    let (value, stats) = run(&bb, &mut builder, &mut gen).unwrap();
    assert_eq!(value, target);
    assert_eq!(stats.primes_used, 64);
    assert_eq!(stats.combines_by_level, vec![32, 16, 8, 4, 2, 1]);
}
