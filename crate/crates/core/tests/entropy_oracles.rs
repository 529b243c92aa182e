//! Entropy oracles: brute-force second moments, an independent eigensolver,
//! and the invariances the measurement must satisfy.

use nalgebra::DMatrix;
use projlens_core::entropy::{
    entropy_reduction, second_moment, spectrum_via_covariance, spectrum_via_gram,
    von_neumann_entropy,
};
use projlens_core::matrix::DenseMatrix;
use projlens_core::random::{normal_matrix, random_orthogonal, rng_from_seed};

/// Entropy computed entirely through nalgebra's symmetric eigensolver.
fn entropy_oracle(v: &DenseMatrix) -> f64 {
    let n = v.rows();
    let d = v.cols();
    let mut sigma = vec![0.0; d * d];
    for i in 0..n {
        let row = v.row(i);
        for a in 0..d {
            for b in 0..d {
                sigma[a * d + b] += row[a] * row[b] / n as f64;
            }
        }
    }
    let m = DMatrix::from_row_slice(d, d, &sigma);
    let eig = m.symmetric_eigen().eigenvalues;
    let total: f64 = eig.iter().map(|&x| x.max(0.0)).sum();
    eig.iter()
        .map(|&x| x.max(0.0) / total)
        .filter(|&x| x > 0.0)
        .map(|x| -x * x.ln())
        .sum()
}

#[test]
fn second_moment_matches_naive_summation() {
    let mut rng = rng_from_seed(101);
    let v = normal_matrix(50, 8, &mut rng);
    let sigma = second_moment(&v).unwrap();
    let mut max_diff: f64 = 0.0;
    for a in 0..8 {
        for b in 0..8 {
            let mut acc = 0.0;
            for i in 0..50 {
                acc += v.get(i, a) * v.get(i, b);
            }
            acc /= 50.0;
            max_diff = max_diff.max((acc - sigma.get(a, b)).abs());
        }
    }
    assert!(max_diff < 1e-12, "max abs diff {max_diff}");
}

#[test]
fn entropy_matches_independent_eigensolver() {
    let mut rng = rng_from_seed(202);
    for (n, d) in [(20usize, 6usize), (40, 12), (9, 16)] {
        let v = normal_matrix(n, d, &mut rng);
        let mine = von_neumann_entropy(&v).unwrap().entropy;
        let oracle = entropy_oracle(&v);
        assert!(
            (mine - oracle).abs() < 1e-10,
            "({n},{d}): {mine} vs {oracle}"
        );
    }
}

#[test]
fn planted_spectrum_rotates_to_the_frozen_value() {
    // Rows with second-moment eigenvalues exactly {0.75, 0.25}, rotated by a
    // random orthogonal map (which must not change the entropy):
    // H = -0.75 ln 0.75 - 0.25 ln 0.25 = 0.56233514.
    let mut rng = rng_from_seed(303);
    let base = DenseMatrix::new(2, 2, vec![1.5f64.sqrt(), 0.0, 0.0, 0.5f64.sqrt()]).unwrap();
    let q = random_orthogonal(2, &mut rng);
    let mut rotated = DenseMatrix::zeros(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = 0.0;
            for k in 0..2 {
                acc += base.get(i, k) * q.get(j, k);
            }
            rotated.set(i, j, acc);
        }
    }
    let r = von_neumann_entropy(&rotated).unwrap();
    assert!(
        (r.entropy - 0.562_335_14).abs() < 1e-7,
        "entropy {}",
        r.entropy
    );
    assert!((r.entropy - entropy_oracle(&rotated)).abs() < 1e-10);
}

#[test]
fn scale_invariance() {
    let mut rng = rng_from_seed(404);
    let v = normal_matrix(30, 7, &mut rng);
    let h = von_neumann_entropy(&v).unwrap().entropy;
    for c in [2.0, -3.5, 1e-3, 1e4] {
        let scaled = DenseMatrix::new(30, 7, v.data().iter().map(|x| c * x).collect()).unwrap();
        let hs = von_neumann_entropy(&scaled).unwrap().entropy;
        assert!((h - hs).abs() < 1e-10, "c={c}: {h} vs {hs}");
    }
}

#[test]
fn orthogonal_invariance() {
    let mut rng = rng_from_seed(505);
    let v = normal_matrix(40, 10, &mut rng);
    let q = random_orthogonal(10, &mut rng);
    // rows transformed: V Q^T
    let mut rotated = DenseMatrix::zeros(40, 10);
    for i in 0..40 {
        for j in 0..10 {
            let mut acc = 0.0;
            for k in 0..10 {
                acc += v.get(i, k) * q.get(j, k);
            }
            rotated.set(i, j, acc);
        }
    }
    let delta = entropy_reduction(&v, &rotated).unwrap();
    assert!(delta.abs() < 1e-9, "delta {delta}");
}

#[test]
fn row_permutation_invariance() {
    let mut rng = rng_from_seed(606);
    let v = normal_matrix(25, 5, &mut rng);
    let mut perm: Vec<usize> = (0..25).collect();
    perm.reverse();
    perm.swap(3, 17);
    let mut shuffled = DenseMatrix::zeros(25, 5);
    for (dst, &src) in perm.iter().enumerate() {
        shuffled.row_mut(dst).copy_from_slice(v.row(src));
    }
    let a = von_neumann_entropy(&v).unwrap().entropy;
    let b = von_neumann_entropy(&shuffled).unwrap().entropy;
    assert!((a - b).abs() < 1e-10);
}

#[test]
fn entropy_bounded_by_log_effective_rank() {
    let mut rng = rng_from_seed(707);
    for _ in 0..20 {
        let v = normal_matrix(12, 9, &mut rng);
        let r = von_neumann_entropy(&v).unwrap();
        assert!(r.entropy <= (r.effective_rank as f64).ln() + 1e-8);
        assert!(r.entropy >= 0.0);
    }
}

#[test]
fn gram_path_equals_covariance_path() {
    let mut rng = rng_from_seed(808);
    for (n, d) in [(15usize, 40usize), (40, 15), (20, 20)] {
        let v = normal_matrix(n, d, &mut rng);
        let a = spectrum_via_covariance(&v).unwrap();
        let b = spectrum_via_gram(&v).unwrap();
        assert!((a.entropy - b.entropy).abs() < 1e-8, "({n},{d})");
        assert_eq!(a.effective_rank, b.effective_rank);
    }
}

#[test]
fn equality_iff_uniform_spectrum() {
    // k equally-loaded orthonormal directions: H = ln k exactly.
    for k in [1usize, 2, 4, 8] {
        let d = 16;
        let mut v = DenseMatrix::zeros(k * 3, d);
        for i in 0..k * 3 {
            v.set(i, i % k, 1.0);
        }
        let r = von_neumann_entropy(&v).unwrap();
        assert!(
            (r.entropy - (k as f64).ln()).abs() < 1e-10,
            "k={k}: {}",
            r.entropy
        );
        assert_eq!(r.effective_rank, k);
    }
}
