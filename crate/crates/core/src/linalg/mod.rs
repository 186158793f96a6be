//! Dense linear algebra for the stability analysis.

mod eigvec;
mod francis;
mod jacobi;
mod matrix;
mod rank;
mod spectrum;

pub use eigvec::eigenvector_near;
pub use francis::{general_eigenvalues, hessenberg};
pub use jacobi::{symmetric_eigen, symmetric_eigen_with, DEFAULT_MAX_SWEEPS};
pub use matrix::{dot, kron, norm2, DenseMatrix};
pub use rank::{kernel_basis, numerical_rank, orthonormalize};
pub use spectrum::{Spectrum, SpectrumJson, DEFAULT_KERNEL_TOL_REL};
