//! Dense complex linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

/// Hermitian part `(m + m†)/2`.
pub fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Largest eigenvalue of a Hermitian matrix.
///
/// The input is symmetrized first so that rounding in the caller cannot
/// feed a slightly non-Hermitian matrix to the solver.
pub fn max_hermitian_eigenvalue(m: &DMatrix<C64>) -> f64 {
    let h = hermitian_part(m);
    let eig = h.symmetric_eigenvalues();
    eig.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
}

/// Eigenvalues and eigenvectors of a Hermitian matrix, sorted ascending.
///
/// Returns `(values, vectors)` with eigenvector `j` in column `j`.
pub fn hermitian_eigen_sorted(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = m.nrows();
    let eig = nalgebra::SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Operator (spectral) norm, computed as `sqrt(λ_max(m† m))`.
pub fn operator_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = m.adjoint() * m;
    max_hermitian_eigenvalue(&gram).max(0.0).sqrt()
}

/// Induced 1-norm (maximum absolute column sum).
pub fn one_norm(m: &DMatrix<C64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Maximum entrywise modulus of `a - b`.
pub fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Complex identity matrix of size `n`.
pub fn identity(n: usize) -> DMatrix<C64> {
    DMatrix::identity(n, n)
}

/// Promote a real matrix to a complex one.
pub fn complexify(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

/// Euclidean norm of a complex vector.
pub fn vec_norm(v: &DVector<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
