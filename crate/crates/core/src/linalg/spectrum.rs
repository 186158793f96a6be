use std::cmp::Ordering;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;

/// Relative kernel threshold: eigenvalues with `|mu| < 1e-6 * rho` count as
/// zero, `rho` being the spectral radius. After normalising the most negative
/// eigenvalue to `-1` this is the absolute threshold `1e-6`. A zero spectrum
/// is all kernel.
pub const DEFAULT_KERNEL_TOL_REL: f64 = 1e-6;

/// Eigenvalues sorted by descending real part (ties: descending imaginary
/// part), optional right eigenvectors stored column-wise in the same order,
/// and the number of eigenvalues below the absolute `kernel_tol`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    pub eigenvectors: Option<DenseMatrix>,
    pub kernel_dim: usize,
    pub kernel_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumJson {
    pub eigenvalues: Vec<[f64; 2]>,
    pub kernel_dim: usize,
    pub kernel_tol: f64,
}

pub(crate) fn descending(a: &Complex64, b: &Complex64) -> Ordering {
    b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im))
}

impl Spectrum {
    pub(crate) fn new(eigenvalues: Vec<Complex64>, eigenvectors: Option<DenseMatrix>) -> Self {
        let rho = eigenvalues.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        let mut s = Spectrum {
            eigenvalues,
            eigenvectors,
            kernel_dim: 0,
            kernel_tol: 0.0,
        };
        s.set_kernel_tol((DEFAULT_KERNEL_TOL_REL * rho).max(f64::MIN_POSITIVE));
        s
    }

    pub fn set_kernel_tol(&mut self, tol: f64) {
        self.kernel_tol = tol;
        self.kernel_dim = self.eigenvalues.iter().filter(|z| z.norm() < tol).count();
    }

    pub fn with_kernel_tol(mut self, tol: f64) -> Self {
        self.set_kernel_tol(tol);
        self
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Real parts in the stored (descending) order.
    pub fn real_parts(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|z| z.re).collect()
    }

    pub fn is_kernel(&self, idx: usize) -> bool {
        self.eigenvalues[idx].norm() < self.kernel_tol
    }

    /// Eigenvalues outside the kernel band.
    pub fn nonzero(&self) -> impl Iterator<Item = &Complex64> {
        self.eigenvalues
            .iter()
            .filter(move |z| z.norm() >= self.kernel_tol)
    }

    /// Multiply every eigenvalue by `s > 0`; eigenvectors are unchanged.
    pub fn scaled(&self, s: f64) -> Self {
        Spectrum {
            eigenvalues: self.eigenvalues.iter().map(|z| z * s).collect(),
            eigenvectors: self.eigenvectors.clone(),
            kernel_dim: self.kernel_dim,
            kernel_tol: self.kernel_tol * s,
        }
    }

    pub fn to_json(&self) -> SpectrumJson {
        SpectrumJson {
            eigenvalues: self.eigenvalues.iter().map(|z| [z.re, z.im]).collect(),
            kernel_dim: self.kernel_dim,
            kernel_tol: self.kernel_tol,
        }
    }
}
