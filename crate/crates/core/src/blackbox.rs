//! Residue black boxes: function objects mapping a prime `p` to the target
//! value modulo `p`, scalar or componentwise for vectors.

use std::time::Duration;

use num_bigint::{BigInt, BigUint};
use num_traits::{Signed, Zero};

use crate::modarith::{inv_mod_u64, mulmod_u64, rem_u64};

/// A reentrant source of residues. `apply(p)` must return the residues of
/// one fixed (hidden) integer target, componentwise, in `[0, p)` — the same
/// target for every `p`. Implementations must tolerate concurrent calls
/// with different primes.
pub trait ResidueBlackBox: Sync {
    fn apply(&self, p: u64) -> Vec<u64>;

    /// Number of entries returned by `apply`; 1 for scalar targets.
    fn dimension(&self) -> usize {
        1
    }
}

impl<T: ResidueBlackBox + ?Sized> ResidueBlackBox for &T {
    fn apply(&self, p: u64) -> Vec<u64> {
        (**self).apply(p)
    }

    fn dimension(&self) -> usize {
        (**self).dimension()
    }
}

/// Test oracle wrapping a known signed integer.
#[derive(Debug, Clone)]
pub struct KnownIntegerOracle {
    value: BigInt,
}

impl KnownIntegerOracle {
    pub fn new(value: BigInt) -> Self {
        KnownIntegerOracle { value }
    }

    pub fn value(&self) -> &BigInt {
        &self.value
    }
}

impl ResidueBlackBox for KnownIntegerOracle {
    fn apply(&self, p: u64) -> Vec<u64> {
        vec![rem_u64(&self.value, p)]
    }
}

/// Test oracle wrapping a known signed integer vector.
#[derive(Debug, Clone)]
pub struct KnownVectorOracle {
    values: Vec<BigInt>,
}

impl KnownVectorOracle {
    pub fn new(values: Vec<BigInt>) -> Self {
        assert!(!values.is_empty());
        KnownVectorOracle { values }
    }

    pub fn values(&self) -> &[BigInt] {
        &self.values
    }
}

impl ResidueBlackBox for KnownVectorOracle {
    fn apply(&self, p: u64) -> Vec<u64> {
        self.values.iter().map(|v| rem_u64(v, p)).collect()
    }

    fn dimension(&self) -> usize {
        self.values.len()
    }
}

/// Dense square matrix with signed arbitrary-precision entries, row major.
#[derive(Debug, Clone)]
pub struct DenseIntMatrix {
    n: usize,
    entries: Vec<BigInt>,
}

impl DenseIntMatrix {
    pub fn new(n: usize, entries: Vec<BigInt>) -> Self {
        assert!(n >= 1, "dimension must be >= 1");
        assert_eq!(entries.len(), n * n, "need n*n entries");
        DenseIntMatrix { n, entries }
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![BigInt::zero(); n * n];
        for i in 0..n {
            entries[i * n + i] = BigInt::from(1);
        }
        DenseIntMatrix { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, row: usize, col: usize) -> &BigInt {
        &self.entries[row * self.n + col]
    }

    /// Largest entry magnitude (the matrix norm used by the determinant
    /// bound).
    pub fn max_abs_entry(&self) -> BigUint {
        self.entries
            .iter()
            .map(|e| e.abs().to_biguint().unwrap())
            .max()
            .unwrap_or_else(BigUint::zero)
    }

    fn reduced_rows(&self, p: u64) -> Vec<Vec<u64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| rem_u64(self.entry(i, j), p)).collect())
            .collect()
    }
}

/// Determinant of `a` over the field with `p` elements, by Gaussian
/// elimination with the first nonzero entry as pivot. A matrix singular
/// modulo `p` yields 0.
pub fn det_mod_p(a: &DenseIntMatrix, p: u64) -> u64 {
    let n = a.n;
    let mut rows = a.reduced_rows(p);
    let mut det = 1u64;
    let mut negate = false;
    for col in 0..n {
        let pivot_row = match (col..n).find(|&r| rows[r][col] != 0) {
            Some(r) => r,
            None => return 0,
        };
        if pivot_row != col {
            rows.swap(pivot_row, col);
            negate = !negate;
        }
        let pivot = rows[col][col];
        det = mulmod_u64(det, pivot, p);
        let inv = inv_mod_u64(pivot, p).expect("pivot is nonzero mod prime p");
        let (pivot_rows, rest) = rows.split_at_mut(col + 1);
        let pivot_row = &pivot_rows[col];
        for row in rest {
            let factor = mulmod_u64(row[col], inv, p);
            if factor == 0 {
                continue;
            }
            for (cell, pv) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                let sub = mulmod_u64(factor, *pv, p);
                *cell = (*cell + p - sub) % p;
            }
        }
    }
    if negate && det != 0 {
        det = p - det;
    }
    det
}

/// `(a * b) mod p`, componentwise.
pub fn matvec_mod_p(a: &DenseIntMatrix, b: &[BigInt], p: u64) -> Vec<u64> {
    assert_eq!(b.len(), a.n, "vector length must match the matrix");
    let rows = a.reduced_rows(p);
    let rhs: Vec<u64> = b.iter().map(|v| rem_u64(v, p)).collect();
    rows.iter()
        .map(|row| {
            let mut acc = 0u64;
            for (x, y) in row.iter().zip(&rhs) {
                acc = (acc + mulmod_u64(*x, *y, p)) % p;
            }
            acc
        })
        .collect()
}

/// Determinant magnitude bound `ceil((n * max|entry|^2)^(n/2))`.
pub fn hadamard_bound(a: &DenseIntMatrix) -> BigUint {
    let max = a.max_abs_entry();
    let base = BigUint::from(a.n) * &max * &max;
    let power = base.pow(a.n as u32);
    ceil_sqrt(&power)
}

fn ceil_sqrt(x: &BigUint) -> BigUint {
    let s = x.sqrt();
    if &(&s * &s) == x {
        s
    } else {
        s + 1u32
    }
}

/// Determinant black box over a fixed matrix.
#[derive(Debug, Clone)]
pub struct DetBlackBox {
    matrix: DenseIntMatrix,
}

impl DetBlackBox {
    pub fn new(matrix: DenseIntMatrix) -> Self {
        DetBlackBox { matrix }
    }

    pub fn matrix(&self) -> &DenseIntMatrix {
        &self.matrix
    }
}

impl ResidueBlackBox for DetBlackBox {
    fn apply(&self, p: u64) -> Vec<u64> {
        vec![det_mod_p(&self.matrix, p)]
    }
}

/// Matrix-vector product black box over fixed inputs.
#[derive(Debug, Clone)]
pub struct MatVecBlackBox {
    matrix: DenseIntMatrix,
    rhs: Vec<BigInt>,
}

impl MatVecBlackBox {
    pub fn new(matrix: DenseIntMatrix, rhs: Vec<BigInt>) -> Self {
        assert_eq!(rhs.len(), matrix.n(), "vector length must match");
        MatVecBlackBox { matrix, rhs }
    }
}

impl ResidueBlackBox for MatVecBlackBox {
    fn apply(&self, p: u64) -> Vec<u64> {
        matvec_mod_p(&self.matrix, &self.rhs, p)
    }

    fn dimension(&self) -> usize {
        self.matrix.n()
    }
}

/// Wrapper adding an artificial per-apply delay, emulating apply-dominated
/// workloads for speedup measurements.
pub struct DelayBlackBox<B> {
    inner: B,
    delay: Duration,
}

impl<B: ResidueBlackBox> DelayBlackBox<B> {
    pub fn new(inner: B, delay: Duration) -> Self {
        DelayBlackBox { inner, delay }
    }
}

impl<B: ResidueBlackBox> ResidueBlackBox for DelayBlackBox<B> {
    fn apply(&self, p: u64) -> Vec<u64> {
        std::thread::sleep(self.delay);
        self.inner.apply(p)
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modarith::{crt_pair, symmetric_rem, ResiduePair};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat(n: usize, entries: &[i64]) -> DenseIntMatrix {
        DenseIntMatrix::new(n, entries.iter().map(|&e| BigInt::from(e)).collect())
    }

    /// Independent determinant oracle: fraction-free (Bareiss) elimination.
    fn det_bareiss(a: &DenseIntMatrix) -> BigInt {
        let n = a.n();
        let mut m: Vec<Vec<BigInt>> = (0..n)
            .map(|i| (0..n).map(|j| a.entry(i, j).clone()).collect())
            .collect();
        let mut sign = 1i64;
        let mut prev = BigInt::from(1);
        for k in 0..n.saturating_sub(1) {
            if m[k][k].is_zero() {
                match (k + 1..n).find(|&r| !m[r][k].is_zero()) {
                    Some(r) => {
                        m.swap(k, r);
                        sign = -sign;
                    }
                    None => return BigInt::zero(),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let num = &m[i][j] * &m[k][k] - &m[i][k] * &m[k][j];
                    m[i][j] = num / &prev;
                }
            }
            prev = m[k][k].clone();
        }
        m[n - 1][n - 1].clone() * sign
    }

    #[test]
    fn known_integer_examples() {
        assert_eq!(KnownIntegerOracle::new(BigInt::from(8)).apply(7), vec![1]);
        assert_eq!(KnownIntegerOracle::new(BigInt::from(-3)).apply(5), vec![2]);
        assert_eq!(KnownIntegerOracle::new(BigInt::zero()).apply(31), vec![0]);
    }

    #[test]
    fn det_mod_p_examples() {
        assert_eq!(det_mod_p(&DenseIntMatrix::identity(3), 7), 1);
        assert_eq!(det_mod_p(&mat(2, &[2, 1, 1, 2]), 5), 3);
        assert_eq!(det_mod_p(&mat(2, &[0, 1, 1, 0]), 7), 6);
        // Singular modulo p.
        assert_eq!(det_mod_p(&mat(2, &[2, 4, 1, 2]), 7), 0);
    }

    #[test]
    fn det_mod_p_matches_exact_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.gen_range(1..=5);
            let entries: Vec<i64> = (0..n * n).map(|_| rng.gen_range(-50..=50)).collect();
            let a = mat(n, &entries);
            let exact = det_bareiss(&a);
            for p in [65521u64, 2147483647] {
                assert_eq!(det_mod_p(&a, p), rem_u64(&exact, p), "n={n} p={p}");
            }
        }
    }

    #[test]
    fn matvec_examples() {
        let a = mat(2, &[1, 2, 3, 4]);
        let b = vec![BigInt::from(1), BigInt::from(1)];
        assert_eq!(matvec_mod_p(&a, &b, 5), vec![3, 2]);

        let id = DenseIntMatrix::identity(3);
        let b = vec![BigInt::from(9), BigInt::from(-2), BigInt::from(4)];
        assert_eq!(matvec_mod_p(&id, &b, 11), vec![9, 9, 4]);
        let zero = vec![BigInt::zero(); 3];
        assert_eq!(matvec_mod_p(&id, &zero, 11), vec![0, 0, 0]);
    }

    #[test]
    fn hadamard_examples() {
        assert_eq!(hadamard_bound(&DenseIntMatrix::identity(2)), BigUint::from(2u32));
        assert_eq!(hadamard_bound(&mat(2, &[2, 1, 1, 2])), BigUint::from(8u32));
        assert_eq!(hadamard_bound(&mat(1, &[5])), BigUint::from(5u32));
    }

    #[test]
    fn hadamard_dominates_exact_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..1000 {
            let n = rng.gen_range(1..=5);
            let entries: Vec<i64> = (0..n * n).map(|_| rng.gen_range(-100..=100)).collect();
            let a = mat(n, &entries);
            let det = det_bareiss(&a).abs().to_biguint().unwrap();
            assert!(hadamard_bound(&a) >= det);
        }
    }

    #[test]
    fn applies_are_crt_consistent() {
        // Residues modulo two primes lift to the one true determinant.
        let a = mat(3, &[4, -7, 2, 0, 3, -1, 5, 5, 6]);
        let bb = DetBlackBox::new(a.clone());
        let (p, q) = (1009u64, 2003u64);
        let lifted = crt_pair(
            &ResiduePair::from_u64(bb.apply(p)[0], p),
            &ResiduePair::from_u64(bb.apply(q)[0], q),
        )
        .unwrap();
        let value = symmetric_rem(
            &BigInt::from(lifted.residue().clone()),
            lifted.modulus(),
        );
        assert_eq!(value, det_bareiss(&a));
    }

    #[test]
    fn apply_is_reentrant() {
        let a = mat(3, &[4, -7, 2, 0, 3, -1, 5, 5, 6]);
        let bb = DetBlackBox::new(a);
        let sequential: Vec<Vec<u64>> =
            [101u64, 103, 107, 109].iter().map(|&p| bb.apply(p)).collect();
        let bb = &bb;
        let concurrent: Vec<Vec<u64>> = std::thread::scope(|s| {
            let handles: Vec<_> = [101u64, 103, 107, 109]
                .iter()
                .map(|&p| s.spawn(move || bb.apply(p)))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(sequential, concurrent);
    }
}
