//! Dense helpers on top of nalgebra: sorted symmetric eigendecomposition,
//! sign-fixed thin QR, and a few conventions shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::rng::{gaussian_matrix, Rng};

/// Eigenpairs of a symmetric matrix, eigenvalues nonincreasing.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = eig.eigenvectors.select_columns(&order);
    (values, vectors)
}

/// Flip each column so that its largest-magnitude entry is positive
/// (first such entry on ties).
pub fn fix_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if !col.is_empty() && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Thin QR of a tall matrix with the diagonal of `R` made nonnegative.
pub fn thin_qr(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = a.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..r.nrows() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
            r.row_mut(j).neg_mut();
        }
    }
    (q, r)
}

/// Indices `j` whose `|R_jj|` falls below `rel_tol` times the largest one,
/// i.e. columns that are numerically dependent on their predecessors.
pub fn deficient_columns(r: &DMatrix<f64>, rel_tol: f64) -> Vec<usize> {
    let scale = (0..r.nrows()).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    (0..r.nrows())
        .filter(|&j| r[(j, j)].abs() <= rel_tol * scale || scale == 0.0)
        .collect()
}

/// Orthonormal basis for the column span, or `None` when rank deficient.
pub fn orthonormalize(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let (q, r) = thin_qr(a);
    if deficient_columns(&r, 1e-10).is_empty() {
        Some(q)
    } else {
        None
    }
}

/// Haar-distributed orthogonal matrix.
pub fn random_orthogonal(d: usize, rng: &mut Rng) -> DMatrix<f64> {
    let (q, _) = thin_qr(&gaussian_matrix(d, d, rng));
    q
}

/// Random rotation (determinant +1).
pub fn random_rotation(d: usize, rng: &mut Rng) -> DMatrix<f64> {
    let mut q = random_orthogonal(d, rng);
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

/// Normalize columns in place; returns indices of columns with zero norm.
pub fn normalize_columns(m: &mut DMatrix<f64>) -> Vec<usize> {
    let mut zero = Vec::new();
    for (j, mut col) in m.column_iter_mut().enumerate() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        } else {
            zero.push(j);
        }
    }
    zero
}
