//! Cyclic Jacobi eigensolver for real symmetric matrices.

use num_complex::Complex64;

use super::matrix::DenseMatrix;
use super::spectrum::{descending, Spectrum};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-12;
const OFF_DIAGONAL_TOL: f64 = 1e-12;

/// Eigen-decomposition `A = V diag(lambda) V^T` of a symmetric matrix.
///
/// Sweeps cyclically over all off-diagonal pairs until the off-diagonal
/// Frobenius norm drops below `1e-12 * ||A||_F`. Eigenvectors are returned
/// column-wise, orthonormal, in descending eigenvalue order.
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<Spectrum> {
    symmetric_eigen_with(a, DEFAULT_MAX_SWEEPS)
}

pub fn symmetric_eigen_with(a: &DenseMatrix, max_sweeps: usize) -> Result<Spectrum> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let norm = a.frobenius_norm();
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL * norm {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }

    // symmetrise exactly so that the rotations below can update both halves
    let mut m = a.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    let mut v = DenseMatrix::identity(n);
    let target = OFF_DIAGONAL_TOL * norm;

    let mut converged = false;
    for _sweep in 0..=max_sweeps {
        if off_diagonal_norm(&m) <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "Jacobi eigensolver",
            iterations: max_sweeps,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let eigenvalues: Vec<Complex64> = order.iter().map(|&i| Complex64::new(m[(i, i)], 0.0)).collect();
    let mut vecs = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vecs[(r, dst)] = v[(r, src)];
        }
    }
    debug_assert!(eigenvalues.windows(2).all(|w| descending(&w[0], &w[1]).is_le()));
    Ok(Spectrum::new(eigenvalues, Some(vecs)))
}

fn off_diagonal_norm(m: &DenseMatrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Annihilate `m[p][q]` with a plane rotation and accumulate it into `v`.
fn rotate(m: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    if apq == 0.0 {
        return;
    }
    let n = m.rows();
    let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    m[(p, p)] -= t * apq;
    m[(q, q)] += t * apq;
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for r in 0..n {
        if r == p || r == q {
            continue;
        }
        let arp = m[(r, p)];
        let arq = m[(r, q)];
        let new_p = arp - s * (arq + tau * arp);
        let new_q = arq + s * (arp - tau * arq);
        m[(r, p)] = new_p;
        m[(p, r)] = new_p;
        m[(r, q)] = new_q;
        m[(q, r)] = new_q;
    }
    for r in 0..n {
        let vrp = v[(r, p)];
        let vrq = v[(r, q)];
        v[(r, p)] = vrp - s * (vrq + tau * vrp);
        v[(r, q)] = vrq + s * (vrp - tau * vrq);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let x = rng.gen_range(-1.0..1.0);
                a[(i, j)] = x;
                a[(j, i)] = x;
            }
        }
        a
    }

    #[test]
    fn identity() {
        let s = symmetric_eigen(&DenseMatrix::identity(3)).unwrap();
        assert!(s.eigenvalues.iter().all(|z| *z == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn two_by_two_closed_form() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let s = symmetric_eigen(&a).unwrap();
        assert!((s.eigenvalues[0].re - 3.0).abs() < 1e-15);
        assert!((s.eigenvalues[1].re - 1.0).abs() < 1e-15);
        let v = s.eigenvectors.unwrap();
        let h = 0.5f64.sqrt();
        // eigenvectors up to sign
        assert!((v[(0, 0)] * v[(1, 0)] - 0.5).abs() < 1e-15);
        assert!((v[(0, 0)].abs() - h).abs() < 1e-15);
        assert!((v[(0, 1)] * v[(1, 1)] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn diagonal_input_is_exact() {
        let d = [3.0, -1.5, 0.0, 7.25, -4.0];
        let s = symmetric_eigen(&DenseMatrix::from_diag(&d)).unwrap();
        let mut sorted = d.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(s.real_parts(), sorted);
    }

    #[test]
    fn reconstruction_50() {
        let a = random_symmetric(50, 7);
        let s = symmetric_eigen(&a).unwrap();
        let v = s.eigenvectors.as_ref().unwrap();
        let lam = DenseMatrix::from_diag(&s.real_parts());
        let recon = v.matmul(&lam).unwrap().matmul(&v.transpose()).unwrap();
        assert!(recon.sub(&a).frobenius_norm() < 1e-10 * a.frobenius_norm());
        let gram = v.transpose().matmul(v).unwrap();
        assert!(gram.sub(&DenseMatrix::identity(50)).max_abs() < 1e-12);
        let tr: f64 = s.real_parts().iter().sum();
        assert!((tr - a.trace()).abs() < 1e-8 * a.frobenius_norm());
    }

    #[test]
    fn rejects_asymmetric() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(symmetric_eigen(&a), Err(Error::NotSymmetric { .. })));
        let r = DenseMatrix::zeros(2, 3);
        assert!(matches!(symmetric_eigen(&r), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn sweep_limit_reports_non_convergence() {
        let a = random_symmetric(10, 1);
        assert!(matches!(
            symmetric_eigen_with(&a, 0),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn zero_matrix() {
        let s = symmetric_eigen(&DenseMatrix::zeros(4, 4)).unwrap();
        assert_eq!(s.kernel_dim, 4);
        assert!(s.eigenvalues.iter().all(|z| z.norm() == 0.0));
    }
}
