//! Symmetric eigenvalue computation.
//!
//! Householder reduction to tridiagonal form followed by the implicit-shift
//! QL iteration, eigenvalues only (the classic tred2/tql2 pair with the
//! eigenvector accumulation removed). Backward stable; eigenvalues come back
//! accurate to a few ulps of the matrix norm, which is what the spectrum
//! tolerances downstream rely on.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::DenseMatrix;

/// Eigenvalues of a symmetric matrix, ascending order.
///
/// Only the lower triangle of `a` is read. Errors if `a` is not square or
/// the QL iteration fails to converge (does not happen for finite symmetric
/// input).
pub fn sym_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: a.cols(),
            what: "symmetric eigensolver input",
        });
    }
    let n = a.rows();
    let mut work: Vec<f64> = a.data().to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut work, n, &mut d, &mut e);
    ql_implicit(&mut d, &mut e)?;
    d.sort_unstable_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    Ok(d)
}

/// Householder reduction of a symmetric matrix to tridiagonal form.
///
/// On exit `d` holds the diagonal and `e[1..]` the subdiagonal (`e[0]` = 0).
/// `a` is destroyed.
fn tridiagonalize(a: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64]) {
    for i in (1..n).rev() {
        let mut h = 0.0;
        if i > 1 {
            let mut scale = 0.0;
            for k in 0..i {
                scale += math::abs(a[i * n + k]);
            }
            if scale == 0.0 {
                e[i] = a[i * n + i - 1];
            } else {
                for k in 0..i {
                    a[i * n + k] /= scale;
                    h += a[i * n + k] * a[i * n + k];
                }
                let f = a[i * n + i - 1];
                let g = if f >= 0.0 {
                    -math::sqrt(h)
                } else {
                    math::sqrt(h)
                };
                e[i] = scale * g;
                h -= f * g;
                a[i * n + i - 1] = f - g;
                let mut fsum = 0.0;
                for j in 0..i {
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += a[j * n + k] * a[i * n + k];
                    }
                    for k in (j + 1)..i {
                        g += a[k * n + j] * a[i * n + k];
                    }
                    e[j] = g / h;
                    fsum += e[j] * a[i * n + j];
                }
                let hh = fsum / (h + h);
                for j in 0..i {
                    let f = a[i * n + j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[j * n + k] -= f * e[k] + g * a[i * n + k];
                    }
                }
            }
        } else {
            e[i] = a[i * n + i - 1];
        }
        d[i] = h;
    }
    e[0] = 0.0;
    for i in 0..n {
        d[i] = a[i * n + i];
    }
}

/// QL iteration with implicit Wilkinson shifts on a tridiagonal matrix.
///
/// `d` is the diagonal, `e[1..]` the subdiagonal. Eigenvalues replace `d`.
fn ql_implicit(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    for l in 0..n {
        let mut iter = 0;
        loop {
            // Look for a single small subdiagonal element to split the matrix.
            let mut m = l;
            while m + 1 < n {
                let dd = math::abs(d[m]) + math::abs(d[m + 1]);
                if math::abs(e[m]) <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::NoConvergence);
            }

            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = math::hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + math::copysign(r, g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = math::hypot(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                f = (d[i] - g) * s + 2.0 * c * b;
                p = s * f;
                d[i + 1] = g + p;
                g = c * f - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn from_rows(rows: &[&[f64]]) -> DenseMatrix {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            data.extend_from_slice(r);
        }
        DenseMatrix::new(n, rows[0].len(), data).unwrap()
    }

    #[test]
    fn diagonal_matrix() {
        let a = from_rows(&[&[3.0, 0.0], &[0.0, -1.0]]);
        let eig = sym_eigenvalues(&a).unwrap();
        assert!((eig[0] + 1.0).abs() < 1e-14);
        assert!((eig[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn one_by_one() {
        let a = DenseMatrix::new(1, 1, vec![2.5]).unwrap();
        assert_eq!(sym_eigenvalues(&a).unwrap(), vec![2.5]);
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[2, 1], [1, 2]] has eigenvalues 1 and 3.
        let a = from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let eig = sym_eigenvalues(&a).unwrap();
        assert!((eig[0] - 1.0).abs() < 1e-14);
        assert!((eig[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix() {
        let a = DenseMatrix::zeros(5, 5);
        let eig = sym_eigenvalues(&a).unwrap();
        assert!(eig.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_non_square() {
        let a = DenseMatrix::zeros(2, 3);
        assert!(sym_eigenvalues(&a).is_err());
    }

    #[test]
    fn trace_and_frobenius_identities() {
        // Sum of eigenvalues = trace; sum of squares = ||A||_F^2.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        for n in [2usize, 3, 7, 16, 33] {
            let mut a = DenseMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    a.set(i, j, v);
                    a.set(j, i, v);
                }
            }
            let eig = sym_eigenvalues(&a).unwrap();
            let trace: f64 = (0..n).map(|i| a.get(i, i)).sum();
            let fro2: f64 = a.data().iter().map(|v| v * v).sum();
            let esum: f64 = eig.iter().sum();
            let esq: f64 = eig.iter().map(|v| v * v).sum();
            assert!((trace - esum).abs() < 1e-10 * (1.0 + trace.abs()), "n={n}");
            assert!((fro2 - esq).abs() < 1e-10 * (1.0 + fro2), "n={n}");
        }
    }
}
