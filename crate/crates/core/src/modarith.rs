//! Arbitrary-precision modular primitives and the atomic two-pair lift.
//!
//! The lift combines `U mod M` and `V mod N` (coprime moduli) into
//! `R mod M*N` with a single multiplication modulo the smaller side:
//! `R = U + ((V - U) * M^-1 mod N) * M`.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{CraError, Result};

/// A residue together with its modulus: "target ≡ residue (mod modulus)".
///
/// Invariants: `0 <= residue < modulus` and `modulus >= 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResiduePair {
    residue: BigUint,
    modulus: BigUint,
}

impl ResiduePair {
    /// Panics if the residue is not reduced or the modulus is zero.
    pub fn new(residue: BigUint, modulus: BigUint) -> Self {
        assert!(!modulus.is_zero(), "modulus must be >= 1");
        assert!(residue < modulus, "residue must be reduced modulo modulus");
        ResiduePair { residue, modulus }
    }

    /// The empty accumulator `0 mod 1`, neutral under [`crt_pair`].
    pub fn identity() -> Self {
        ResiduePair {
            residue: BigUint::zero(),
            modulus: BigUint::one(),
        }
    }

    /// Builds a pair from a word-size residue and prime.
    pub fn from_u64(residue: u64, modulus: u64) -> Self {
        Self::new(BigUint::from(residue % modulus), BigUint::from(modulus))
    }

    /// Reduces an arbitrary signed value into `[0, modulus)`.
    pub fn reduced(value: &BigInt, modulus: BigUint) -> Self {
        let m = BigInt::from(modulus.clone());
        let r = value.mod_floor(&m);
        ResiduePair {
            residue: r.to_biguint().expect("mod_floor is nonnegative"),
            modulus,
        }
    }

    pub fn residue(&self) -> &BigUint {
        &self.residue
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn into_parts(self) -> (BigUint, BigUint) {
        (self.residue, self.modulus)
    }
}

impl std::fmt::Display for ResiduePair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({} mod {})", self.residue, self.modulus)
    }
}

/// Extended Euclid: returns `(g, s, t)` with `g = gcd(|a|, |b|) >= 0` and
/// `s*a + t*b = g`.
pub fn ext_gcd(a: &BigInt, b: &BigInt) -> (BigInt, BigInt, BigInt) {
    let (mut old_r, mut r) = (a.abs(), b.abs());
    let (mut old_s, mut s) = (BigInt::one(), BigInt::zero());
    let (mut old_t, mut t) = (BigInt::zero(), BigInt::one());
    while !r.is_zero() {
        let q = &old_r / &r;
        let next_r = &old_r - &q * &r;
        old_r = std::mem::replace(&mut r, next_r);
        let next_s = &old_s - &q * &s;
        old_s = std::mem::replace(&mut s, next_s);
        let next_t = &old_t - &q * &t;
        old_t = std::mem::replace(&mut t, next_t);
    }
    if a.is_negative() {
        old_s = -old_s;
    }
    if b.is_negative() {
        old_t = -old_t;
    }
    (old_r, old_s, old_t)
}

/// Modular inverse: the unique `x` in `(0, n)` with `x*m ≡ 1 (mod n)`.
///
/// Fails with [`CraError::NotCoprime`] when `gcd(m, n) != 1`; distinct
/// primes upstream make that unreachable in normal runs.
pub fn inv_mod(m: &BigUint, n: &BigUint) -> Result<BigUint> {
    debug_assert!(n >= &BigUint::from(2u32), "inv_mod requires n >= 2");
    let m_red = m % n;
    let (g, s, _) = ext_gcd(&BigInt::from(m_red), &BigInt::from(n.clone()));
    if !g.is_one() {
        return Err(CraError::NotCoprime {
            a: m.clone(),
            b: n.clone(),
        });
    }
    let n_int = BigInt::from(n.clone());
    let x = s.mod_floor(&n_int);
    Ok(x.to_biguint().expect("mod_floor is nonnegative"))
}

/// The lift with a precomputed inverse `m_inv = m^-1 mod n`:
/// returns `u + ((v - u) * m_inv mod n) * m`, reduced into `[0, m*n)`.
pub(crate) fn lift_with_inverse(
    u: &BigUint,
    m: &BigUint,
    v: &BigUint,
    n: &BigUint,
    m_inv: &BigUint,
) -> BigUint {
    let u_n = u % n;
    let diff = if v >= &u_n {
        v - &u_n
    } else {
        n - &u_n + v
    };
    let term = diff * m_inv % n;
    let mut r = u + term * m;
    let product = m * n;
    // Final correction; unreachable for reduced inputs but kept as written.
    if r > product {
        r -= product;
    }
    r
}

/// Combines two residue pairs with coprime moduli into one pair modulo the
/// product, using one inverse and one multiplication modulo `b.modulus`.
pub fn crt_pair(a: &ResiduePair, b: &ResiduePair) -> Result<ResiduePair> {
    if a.modulus.is_one() {
        return Ok(b.clone());
    }
    if b.modulus.is_one() {
        return Ok(a.clone());
    }
    let m_inv = inv_mod(&a.modulus, &b.modulus)?;
    let residue = lift_with_inverse(&a.residue, &a.modulus, &b.residue, &b.modulus, &m_inv);
    Ok(ResiduePair {
        residue,
        modulus: &a.modulus * &b.modulus,
    })
}

/// Symmetric remainder: the representative of `x mod m` in `(-m/2, m/2]`.
///
/// This is what turns an unsigned reconstruction into a signed result once
/// the modulus exceeds twice the target's magnitude.
pub fn symmetric_rem(x: &BigInt, m: &BigUint) -> BigInt {
    debug_assert!(!m.is_zero(), "modulus must be >= 1");
    let m_int = BigInt::from(m.clone());
    let mut r = x.mod_floor(&m_int);
    if &r * 2 > m_int {
        r -= BigInt::from(m.clone());
    }
    r
}

/// A chain of pairwise-coprime moduli with the factors
/// `factors[i] = prefix[i] * (prefix[i]^-1 mod moduli[i])`, where
/// `prefix[i] = moduli[0] * ... * moduli[i-1]`.
///
/// Each factor is ≡ 1 modulo its own modulus and ≡ 0 modulo the prefix
/// product, so appending residue `i` costs one multiplication and one
/// reduction instead of a fresh inverse per step.
#[derive(Debug, Clone)]
pub struct PrecomputedChain {
    moduli: Vec<BigUint>,
    prefix_products: Vec<BigUint>,
    factors: Vec<BigUint>,
}

impl PrecomputedChain {
    pub fn moduli(&self) -> &[BigUint] {
        &self.moduli
    }

    pub fn prefix_products(&self) -> &[BigUint] {
        &self.prefix_products
    }

    pub fn factors(&self) -> &[BigUint] {
        &self.factors
    }
}

/// Precomputes the factor chain for a fixed modulus sequence.
pub fn build_chain(moduli: &[BigUint]) -> Result<PrecomputedChain> {
    let two = BigUint::from(2u32);
    let mut prefix_products = Vec::with_capacity(moduli.len());
    let mut factors = Vec::with_capacity(moduli.len());
    let mut prefix = BigUint::one();
    for m in moduli {
        assert!(m >= &two, "chain moduli must be >= 2");
        // inv_mod detects any shared factor with the moduli seen so far.
        let inv = inv_mod(&prefix, m)?;
        factors.push(&prefix * inv);
        prefix_products.push(prefix.clone());
        prefix *= m;
    }
    Ok(PrecomputedChain {
        moduli: moduli.to_vec(),
        prefix_products,
        factors,
    })
}

/// Folds a full residue list through the precomputed chain. The value is
/// identical to folding [`crt_pair`] left to right over the same list.
pub fn chain_reconstruct(chain: &PrecomputedChain, residues: &[BigUint]) -> Result<ResiduePair> {
    if residues.len() != chain.moduli.len() {
        return Err(CraError::LengthMismatch {
            expected: chain.moduli.len(),
            got: residues.len(),
        });
    }
    let mut acc = BigUint::zero();
    let mut product = BigUint::one();
    for ((r, m), factor) in residues
        .iter()
        .zip(&chain.moduli)
        .zip(&chain.factors)
    {
        let acc_m = &acc % m;
        let r = r % m;
        let delta = if r >= acc_m { r - acc_m } else { m - acc_m + r };
        product *= m;
        acc = (acc + delta * factor) % &product;
    }
    Ok(ResiduePair {
        residue: acc,
        modulus: product,
    })
}

// Word-size helpers used by the prime generator and the residue black boxes.

pub(crate) fn mulmod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub(crate) fn powmod_u64(mut base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mulmod_u64(acc, base, m);
        }
        base = mulmod_u64(base, base, m);
        exp >>= 1;
    }
    acc
}

pub(crate) fn inv_mod_u64(a: u64, m: u64) -> Option<u64> {
    let (mut t, mut new_t) = (0i128, 1i128);
    let (mut r, mut new_r) = (m as i128, (a % m) as i128);
    while new_r != 0 {
        let q = r / new_r;
        let next_t = t - q * new_t;
        t = std::mem::replace(&mut new_t, next_t);
        let next_r = r - q * new_r;
        r = std::mem::replace(&mut new_r, next_r);
    }
    if r != 1 {
        return None;
    }
    if t < 0 {
        t += m as i128;
    }
    Some(t as u64)
}

/// Reduces a signed big integer to a word-size residue in `[0, p)`.
pub fn rem_u64(x: &BigInt, p: u64) -> u64 {
    x.mod_floor(&BigInt::from(p))
        .to_u64()
        .expect("residue fits in u64")
}
