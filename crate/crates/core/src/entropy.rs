//! Von Neumann entropy of an embedding set.
//!
//! For n row vectors v_i of dimension d, the uncentered second moment is
//! Sigma = (1/n) sum_i v_i v_i^T. Normalizing by its trace gives a density
//! matrix rho whose eigenvalues lambda_j are non-negative and sum to 1; the
//! entropy is H = -sum_j lambda_j ln(lambda_j) in nats, with 0 ln 0 := 0.
//!
//! H measures how evenly energy spreads across the feature space: 0 for a
//! rank-1 set, ln(min(d, n)) for an isotropic one. The drop in H across a
//! projector quantifies how much the projector compresses its input.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::sym_eigenvalues;
use crate::math;
use crate::matrix::DenseMatrix;

/// Eigenvalues below `RANK_EPS_REL * lambda_max` are clipped to zero before
/// taking logs, absorbing the eigensolver's negative round-off.
const RANK_EPS_REL: f64 = 1e-12;

/// The spectrum of the trace-normalized second moment, with its entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Eigenvalues of rho, descending; non-negative and summing to 1.
    pub eigenvalues: Vec<f64>,
    /// Von Neumann entropy in nats.
    pub entropy: f64,
    /// Number of eigenvalues above the clipping threshold.
    pub effective_rank: usize,
    /// Sample count n.
    pub n: usize,
    /// Embedding dimension d.
    pub d: usize,
}

/// Uncentered second moment Sigma = (1/n) V^T V, a d x d symmetric PSD
/// matrix. Computed by direct accumulation in fixed order.
pub fn second_moment(v: &DenseMatrix) -> Result<DenseMatrix> {
    let n = v.rows();
    let d = v.cols();
    let mut sigma = DenseMatrix::zeros(d, d);
    for i in 0..n {
        let row = v.row(i);
        for a in 0..d {
            let ra = row[a];
            if ra == 0.0 {
                continue;
            }
            let dst = &mut sigma.data_mut()[a * d..(a + 1) * d];
            for (s, &rb) in dst.iter_mut().zip(row) {
                *s += ra * rb;
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    for x in sigma.data_mut() {
        *x *= inv_n;
    }
    Ok(sigma)
}

/// Gram matrix G = (1/n) V V^T, an n x n symmetric PSD matrix sharing the
/// nonzero spectrum of the second moment.
pub fn gram_matrix(v: &DenseMatrix) -> Result<DenseMatrix> {
    let n = v.rows();
    let inv_n = 1.0 / n as f64;
    let mut g = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let x = math::dot(v.row(i), v.row(j)) * inv_n;
            g.set(i, j, x);
            g.set(j, i, x);
        }
    }
    Ok(g)
}

/// Entropy of the spectrum through the d x d second moment.
pub fn spectrum_via_covariance(v: &DenseMatrix) -> Result<SpectrumReport> {
    let sigma = second_moment(v)?;
    report_from_raw_eigenvalues(sym_eigenvalues(&sigma)?, v.rows(), v.cols())
}

/// Entropy of the spectrum through the n x n Gram matrix. Same nonzero
/// eigenvalues as the covariance path; cheaper when d > n.
pub fn spectrum_via_gram(v: &DenseMatrix) -> Result<SpectrumReport> {
    let g = gram_matrix(v)?;
    report_from_raw_eigenvalues(sym_eigenvalues(&g)?, v.rows(), v.cols())
}

/// Von Neumann entropy of an embedding set (rows are samples).
///
/// Picks the Gram path when d > n, the covariance path otherwise. Errors on
/// an all-zero input, whose density matrix is undefined.
pub fn von_neumann_entropy(v: &DenseMatrix) -> Result<SpectrumReport> {
    if v.cols() > v.rows() {
        spectrum_via_gram(v)
    } else {
        spectrum_via_covariance(v)
    }
}

/// Entropy reduction H(before) - H(after). Positive means the map from
/// `before` to `after` compressed the embedding spectrum. The two sets may
/// have different dimensions.
pub fn entropy_reduction(before: &DenseMatrix, after: &DenseMatrix) -> Result<f64> {
    let hb = von_neumann_entropy(before)?.entropy;
    let ha = von_neumann_entropy(after)?.entropy;
    Ok(hb - ha)
}

fn report_from_raw_eigenvalues(mut raw: Vec<f64>, n: usize, d: usize) -> Result<SpectrumReport> {
    raw.sort_unstable_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    let lam_max = raw.first().copied().unwrap_or(0.0);
    if lam_max <= 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let floor = RANK_EPS_REL * lam_max;
    for x in raw.iter_mut() {
        if *x < floor {
            *x = 0.0;
        }
    }
    let total: f64 = raw.iter().sum();
    let mut entropy = 0.0;
    let mut effective_rank = 0;
    for x in raw.iter_mut() {
        *x /= total;
        if *x > 0.0 {
            entropy -= *x * math::ln(*x);
            effective_rank += 1;
        }
    }
    Ok(SpectrumReport {
        eigenvalues: raw,
        entropy,
        effective_rank,
        n,
        d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn orthonormal_pair_second_moment() {
        let v = DenseMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let s = second_moment(&v).unwrap();
        assert_eq!(s.data(), &[0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn single_vector_second_moment() {
        let v = DenseMatrix::new(1, 2, vec![2.0, 0.0]).unwrap();
        let s = second_moment(&v).unwrap();
        assert_eq!(s.data(), &[4.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rank_one_set_has_zero_entropy() {
        let v = DenseMatrix::new(4, 3, [1.0, 2.0, -1.0].repeat(4)).unwrap();
        let r = von_neumann_entropy(&v).unwrap();
        assert!(r.entropy.abs() < 1e-9, "entropy {}", r.entropy);
        assert_eq!(r.effective_rank, 1);
    }

    #[test]
    fn uniform_two_point_spectrum_is_ln_two() {
        let v = DenseMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let r = von_neumann_entropy(&v).unwrap();
        assert!((r.entropy - core::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(r.eigenvalues, vec![0.5, 0.5]);
    }

    #[test]
    fn three_quarter_one_quarter_spectrum() {
        // Rows (sqrt(1.5), 0) and (0, sqrt(0.5)): Sigma = diag(0.75, 0.25),
        // trace 1, so the entropy is -0.75 ln 0.75 - 0.25 ln 0.25.
        let v = DenseMatrix::new(2, 2, vec![1.5f64.sqrt(), 0.0, 0.0, 0.5f64.sqrt()]).unwrap();
        let r = von_neumann_entropy(&v).unwrap();
        assert!((r.entropy - 0.562335).abs() < 1e-6, "entropy {}", r.entropy);
    }

    #[test]
    fn all_zero_input_is_an_error() {
        let v = DenseMatrix::zeros(3, 3);
        assert_eq!(von_neumann_entropy(&v).unwrap_err(), Error::ZeroMatrix);
        assert_eq!(entropy_reduction(&v, &v).unwrap_err(), Error::ZeroMatrix);
    }

    #[test]
    fn identical_inputs_have_zero_reduction() {
        let v = DenseMatrix::new(3, 2, vec![1.0, 2.0, 0.5, -1.0, 0.0, 3.0]).unwrap();
        assert_eq!(entropy_reduction(&v, &v).unwrap(), 0.0);
    }

    #[test]
    fn eigenvalues_sum_to_one() {
        let v = DenseMatrix::new(
            5,
            3,
            vec![
                1.0, 2.0, 3.0, -1.0, 0.5, 2.5, 0.1, 0.2, 0.3, 4.0, -2.0, 1.0, 0.0, 1.0, 0.0,
            ],
        )
        .unwrap();
        let r = von_neumann_entropy(&v).unwrap();
        let sum: f64 = r.eigenvalues.iter().sum();
        assert!((sum - 1.0).abs() < 1e-8);
        assert!(r.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!(r.eigenvalues.iter().all(|&x| x >= 0.0));
    }
}
