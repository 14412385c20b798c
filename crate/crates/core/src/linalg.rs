//! Small dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// `m + mᵀ`.
pub fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    m + m.transpose()
}

/// Force exact symmetry before a symmetric eigendecomposition.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted
/// ascending and eigenvectors in matching column order.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut vals: Vec<f64> = nalgebra::SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    DVector::from_vec(vals)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let vals = symmetric_eigenvalues(m);
    vals[vals.len() - 1]
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// Moore-Penrose pseudoinverse of a symmetric PSD matrix, inverting only
/// eigenvalues above `zero_tol * max(1, lambda_max)`.
pub fn symmetric_pseudoinverse(m: &DMatrix<f64>, zero_tol: f64) -> DMatrix<f64> {
    let (values, vectors) = sorted_symmetric_eigen(m);
    let lambda_max = values.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = zero_tol * 1.0_f64.max(lambda_max);
    let inv = DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| if v.abs() <= cutoff { 0.0 } else { 1.0 / v }),
    );
    &vectors * DMatrix::from_diagonal(&inv) * vectors.transpose()
}

/// Inverse with a conditioning guard; `label` names the matrix in errors.
pub fn checked_inverse(m: &DMatrix<f64>, label: &str) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-12 * 1.0_f64.max(smax) {
        return Err(Error::SingularX(format!(
            "{label}: smallest singular value {smin:.3e}"
        )));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularX(label.to_string()))
}

/// Max |entry| of the difference, as a cheap matrix-equality metric.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}
