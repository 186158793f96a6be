//! Right eigenvectors of general matrices for a known eigenvalue, by complex
//! shifted inverse iteration.

use num_complex::Complex64;

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

/// Unit right eigenvector of `a` for the eigenvalue closest to `lambda`.
///
/// The shift is nudged by `1e-10 * ||A||_F` so the factorisation stays
/// invertible when `lambda` is exact.
pub fn eigenvector_near(a: &DenseMatrix, lambda: Complex64) -> Result<Vec<Complex64>> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let scale = a.frobenius_norm().max(1.0);
    let shift = lambda + Complex64::new(1e-10 * scale, 1e-10 * scale);
    let mut m: Vec<Complex64> = a.as_slice().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for i in 0..n {
        m[i * n + i] -= shift;
    }
    let perm = lu_in_place(&mut m, n);

    // deterministic, generic starting vector
    let mut x: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(1.0 + 0.37 * (i as f64 * 1.3).sin(), 0.21 * (i as f64 * 0.7).cos()))
        .collect();
    normalize(&mut x);
    for _ in 0..4 {
        x = lu_solve(&m, &perm, n, &x);
        if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NoConvergence {
                what: "inverse iteration",
                iterations: 4,
            });
        }
        normalize(&mut x);
    }
    Ok(x)
}

fn normalize(x: &mut [Complex64]) {
    let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    // fix the phase on the largest component for reproducibility
    let big = x
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(Complex64::new(1.0, 0.0));
    let phase = if big.norm() > 0.0 { big.conj() / big.norm() } else { Complex64::new(1.0, 0.0) };
    for z in x.iter_mut() {
        *z = *z * phase / norm;
    }
}

/// LU with partial pivoting; returns the row permutation.
fn lu_in_place(m: &mut [Complex64], n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut p = k;
        let mut best = m[k * n + k].norm();
        for i in (k + 1)..n {
            let v = m[i * n + k].norm();
            if v > best {
                best = v;
                p = i;
            }
        }
        if p != k {
            for j in 0..n {
                m.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
        }
        let piv = m[k * n + k];
        if piv.norm() == 0.0 {
            m[k * n + k] = Complex64::new(f64::EPSILON, 0.0);
        }
        let piv = m[k * n + k];
        for i in (k + 1)..n {
            let f = m[i * n + k] / piv;
            m[i * n + k] = f;
            if f.norm() == 0.0 {
                continue;
            }
            for j in (k + 1)..n {
                let u = m[k * n + j];
                m[i * n + j] -= f * u;
            }
        }
    }
    perm
}

fn lu_solve(m: &[Complex64], perm: &[usize], n: usize, b: &[Complex64]) -> Vec<Complex64> {
    let mut y: Vec<Complex64> = perm.iter().map(|&p| b[p]).collect();
    for i in 0..n {
        for j in 0..i {
            let l = m[i * n + j];
            y[i] = y[i] - l * y[j];
        }
    }
    for i in (0..n).rev() {
        for j in (i + 1)..n {
            let u = m[i * n + j];
            y[i] = y[i] - u * y[j];
        }
        y[i] /= m[i * n + i];
    }
    y
}
