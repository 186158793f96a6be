//! Numerical rank and kernel bases by full-pivot Gaussian elimination.

use super::matrix::{dot, DenseMatrix};

struct Echelon {
    /// Reduced rows, `rank x cols`, with unit pivots.
    reduced: DenseMatrix,
    pivots: Vec<usize>,
}

/// Gauss-Jordan elimination with complete pivoting. Elimination stops once
/// the largest remaining entry is below `tol * ||A||_F`.
fn echelon(a: &DenseMatrix, tol: f64) -> Echelon {
    let (rows, cols) = (a.rows(), a.cols());
    let mut m = a.clone();
    let threshold = tol * a.frobenius_norm();
    let mut row_order: Vec<usize> = (0..rows).collect();
    let mut pivots = Vec::new();
    let mut free_cols: Vec<bool> = vec![true; cols];

    for step in 0..rows.min(cols) {
        // complete pivot search over the remaining rows and free columns
        let mut best = (0.0f64, 0usize, 0usize);
        for &ri in &row_order[step..] {
            for (j, &free) in free_cols.iter().enumerate() {
                if free && m[(ri, j)].abs() > best.0 {
                    best = (m[(ri, j)].abs(), ri, j);
                }
            }
        }
        if best.0 <= threshold || best.0 == 0.0 {
            break;
        }
        let (_, pr, pc) = best;
        let pos = row_order[step..].iter().position(|&r| r == pr).unwrap() + step;
        row_order.swap(step, pos);
        free_cols[pc] = false;
        pivots.push(pc);

        let inv = 1.0 / m[(pr, pc)];
        for j in 0..cols {
            m[(pr, j)] *= inv;
        }
        for &ri in &row_order {
            if ri == pr {
                continue;
            }
            let f = m[(ri, pc)];
            if f == 0.0 {
                continue;
            }
            for j in 0..cols {
                let v = m[(pr, j)];
                m[(ri, j)] -= f * v;
            }
        }
    }

    let rank = pivots.len();
    let mut reduced = DenseMatrix::zeros(rank, cols);
    for (k, &ri) in row_order[..rank].iter().enumerate() {
        for j in 0..cols {
            reduced[(k, j)] = m[(ri, j)];
        }
    }
    Echelon { reduced, pivots }
}

/// Number of pivots larger than `tol * ||A||_F` under complete pivoting.
pub fn numerical_rank(a: &DenseMatrix, tol: f64) -> usize {
    echelon(a, tol).pivots.len()
}

/// Orthonormal basis of the numerical kernel, stored as the columns of the
/// returned `cols x (cols - rank)` matrix.
pub fn kernel_basis(a: &DenseMatrix, tol: f64) -> DenseMatrix {
    let n = a.cols();
    let Echelon { reduced, pivots } = echelon(a, tol);
    let mut is_pivot = vec![false; n];
    for &p in &pivots {
        is_pivot[p] = true;
    }
    let mut raw: Vec<Vec<f64>> = Vec::new();
    for f in (0..n).filter(|&j| !is_pivot[j]) {
        let mut v = vec![0.0; n];
        v[f] = 1.0;
        for (k, &p) in pivots.iter().enumerate() {
            v[p] = -reduced[(k, f)];
        }
        raw.push(v);
    }
    let basis = orthonormalize(raw);
    let mut out = DenseMatrix::zeros(n, basis.len());
    for (j, v) in basis.iter().enumerate() {
        out.set_col(j, v);
    }
    out
}

/// Modified Gram-Schmidt with one reorthogonalisation pass.
pub fn orthonormalize(vectors: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for mut v in vectors {
        for _ in 0..2 {
            for q in &out {
                let c = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
            out.push(v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check_kernel(a: &DenseMatrix, k: &DenseMatrix, tol: f64) {
        let gram = k.transpose().matmul(k).unwrap();
        assert!(gram.sub(&DenseMatrix::identity(k.cols())).max_abs() < 1e-12);
        for j in 0..k.cols() {
            let r = a.mul_vec(&k.col(j));
            assert!(r.iter().map(|x| x * x).sum::<f64>().sqrt() <= 10.0 * tol * a.frobenius_norm());
        }
    }

    #[test]
    fn zero_matrix() {
        let a = DenseMatrix::zeros(3, 3);
        assert_eq!(numerical_rank(&a, 1e-8), 0);
        let k = kernel_basis(&a, 1e-8);
        assert_eq!(k, DenseMatrix::identity(3));
    }

    #[test]
    fn rank_one_outer_product() {
        let u = DenseMatrix::column(&[1.0, -2.0, 0.5, 3.0]);
        let a = u.matmul(&u.transpose()).unwrap();
        assert_eq!(numerical_rank(&a, 1e-10), 1);
        let k = kernel_basis(&a, 1e-10);
        assert_eq!(k.cols(), 3);
        check_kernel(&a, &k, 1e-10);
    }

    #[test]
    fn random_low_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for rank in [1usize, 3, 5] {
            let l = DenseMatrix::from_row_major(8, rank, (0..8 * rank).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let r = DenseMatrix::from_row_major(rank, 8, (0..8 * rank).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let a = l.matmul(&r).unwrap();
            assert_eq!(numerical_rank(&a, 1e-10), rank);
            let k = kernel_basis(&a, 1e-10);
            assert_eq!(k.cols(), 8 - rank);
            check_kernel(&a, &k, 1e-10);
        }
    }

    #[test]
    fn full_rank_has_empty_kernel() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        assert_eq!(numerical_rank(&a, 1e-12), 2);
        assert_eq!(kernel_basis(&a, 1e-12).cols(), 0);
    }

    #[test]
    fn nilpotent() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(numerical_rank(&a, 1e-12), 1);
        let a2 = a.matmul(&a).unwrap();
        assert_eq!(numerical_rank(&a2, 1e-12), 0);
    }
}
