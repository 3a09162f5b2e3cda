//! Small dense linear-algebra helpers shared by the graph, plant and
//! controller modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative cutoff below which an eigenvalue of a symmetric positive
/// semidefinite matrix is treated as zero: `λ ≤ EIG_CUTOFF · max(1, λ_max)`.
pub const EIG_CUTOFF: f64 = 1e-10;

/// Largest absolute elementwise difference between two equally sized matrices.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest absolute entry, zero for an empty matrix.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Returns the first `(i, j)` where `|a_ij - a_ji| > tol`.
pub fn asymmetry(a: &DMatrix<f64>, tol: f64) -> Option<(usize, usize)> {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return Some((i, j));
            }
        }
    }
    None
}

/// `M ⊗ I_q`.
pub fn kron_identity(m: &DMatrix<f64>, q: usize) -> DMatrix<f64> {
    m.kronecker(&DMatrix::identity(q, q))
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending and the
/// eigenvector columns permuted to match.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    // Symmetrize so round-off asymmetry never leaks into the solver.
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Zero threshold for a spectrum whose largest eigenvalue is `lambda_max`.
pub fn eigen_cutoff(lambda_max: f64) -> f64 {
    EIG_CUTOFF * lambda_max.abs().max(1.0)
}

/// Moore–Penrose pseudoinverse of a symmetric matrix from its
/// eigendecomposition, inverting only eigenvalues above the cutoff.
/// The caller guarantees symmetry.
pub fn symmetric_pinv_unchecked(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let (values, vectors) = sorted_symmetric_eigen(m);
    let lmax = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let cutoff = eigen_cutoff(lmax);
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = values[k];
        if lambda.abs() > cutoff {
            let v = vectors.column(k);
            out += (v * v.transpose()) / lambda;
        }
    }
    out
}

/// Centering projector `Π = I_N − (1/N) 1 1ᵀ`.
pub fn centering_projector(n: usize) -> DMatrix<f64> {
    let inv = 1.0 / n as f64;
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 - inv } else { -inv })
}

/// Computes `(M ⊗ I_q) v` without forming the Kronecker product.
pub fn kron_identity_mul(m: &DMatrix<f64>, q: usize, v: &[f64], out: &mut [f64]) {
    let (rows, cols) = m.shape();
    debug_assert_eq!(v.len(), cols * q);
    debug_assert_eq!(out.len(), rows * q);
    out.iter_mut().for_each(|o| *o = 0.0);
    for r in 0..rows {
        for c in 0..cols {
            let a = m[(r, c)];
            if a != 0.0 {
                for k in 0..q {
                    out[r * q + k] += a * v[c * q + k];
                }
            }
        }
    }
}

/// Computes `(Mᵀ ⊗ I_q) v` without forming the transpose.
pub fn kron_identity_tr_mul(m: &DMatrix<f64>, q: usize, v: &[f64], out: &mut [f64]) {
    let (rows, cols) = m.shape();
    debug_assert_eq!(v.len(), rows * q);
    debug_assert_eq!(out.len(), cols * q);
    out.iter_mut().for_each(|o| *o = 0.0);
    for r in 0..rows {
        for c in 0..cols {
            let a = m[(r, c)];
            if a != 0.0 {
                for k in 0..q {
                    out[c * q + k] += a * v[r * q + k];
                }
            }
        }
    }
}

/// `y = M x` for a slice `x`, accumulating into `out` scaled by `alpha`.
pub fn gemv_acc(alpha: f64, m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let (rows, cols) = m.shape();
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for r in 0..rows {
        let mut acc = 0.0;
        for c in 0..cols {
            acc += m[(r, c)] * x[c];
        }
        out[r] += alpha * acc;
    }
}

/// `out += alpha · Mᵀ x`.
pub fn gemv_tr_acc(alpha: f64, m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let (rows, cols) = m.shape();
    debug_assert_eq!(x.len(), rows);
    debug_assert_eq!(out.len(), cols);
    for c in 0..cols {
        let mut acc = 0.0;
        for r in 0..rows {
            acc += m[(r, c)] * x[r];
        }
        out[c] += alpha * acc;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
