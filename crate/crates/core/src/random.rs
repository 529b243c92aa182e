//! Seeded random constructions shared by the synthetic oracle and tests.
//!
//! Everything derives from a ChaCha20 stream keyed with `seed_from_u64`,
//! so identical seeds give bit-identical output on every platform.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::math;
use crate::matrix::DenseMatrix;

/// The crate's deterministic generator.
pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// A standard-normal vector.
pub fn normal_vector(len: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// A matrix with iid standard-normal entries.
pub fn normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = StandardNormal.sample(rng);
    }
    m
}

/// A `rows x cols` matrix with orthonormal rows (`rows <= cols`), drawn
/// Haar-ish by Gram-Schmidt on Gaussian vectors with one re-orthogonalization
/// pass. With `rows == cols` this is a random orthogonal matrix.
pub fn orthonormal_rows(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> DenseMatrix {
    assert!(
        rows <= cols,
        "cannot fit {rows} orthonormal rows in dimension {cols}"
    );
    let mut q = DenseMatrix::zeros(rows, cols);
    let mut i = 0;
    while i < rows {
        let mut v = normal_vector(cols, rng);
        // Two projection passes keep orthogonality near machine precision.
        for _ in 0..2 {
            for j in 0..i {
                let proj = math::dot(&v, q.row(j));
                for (vk, qk) in v.iter_mut().zip(q.row(j)) {
                    *vk -= proj * qk;
                }
            }
        }
        let n = math::norm(&v);
        if n < 1e-8 {
            continue; // essentially impossible; redraw
        }
        for vk in v.iter_mut() {
            *vk /= n;
        }
        q.row_mut(i).copy_from_slice(&v);
        i += 1;
    }
    q
}

/// A random orthogonal matrix.
pub fn random_orthogonal(n: usize, rng: &mut ChaCha20Rng) -> DenseMatrix {
    orthonormal_rows(n, n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_rows_are_orthonormal() {
        let mut rng = rng_from_seed(3);
        let q = orthonormal_rows(5, 9, &mut rng);
        for i in 0..5 {
            for j in 0..=i {
                let want = if i == j { 1.0 } else { 0.0 };
                let got = math::dot(q.row(i), q.row(j));
                assert!((got - want).abs() < 1e-12, "({i},{j}) -> {got}");
            }
        }
    }

    #[test]
    fn seeded_draws_are_reproducible() {
        let a = normal_matrix(4, 4, &mut rng_from_seed(9));
        let b = normal_matrix(4, 4, &mut rng_from_seed(9));
        assert_eq!(a, b);
    }
}
