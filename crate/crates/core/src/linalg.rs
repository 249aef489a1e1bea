//! Small dense factorizations used by the surrogate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{GenboError, Result};

/// Jitter ladder tried after a plain factorization fails.
pub const JITTER_LADDER: [f64; 5] = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Lower Cholesky factor of a symmetric positive-definite matrix, or `None`
/// when a pivot is not strictly positive.
pub fn cholesky(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Cholesky with escalating diagonal jitter. Returns the factor and the jitter used
/// (`0.0` when none was needed).
pub fn cholesky_jittered(a: &DMatrix<f64>, start_jitter: f64) -> Result<(DMatrix<f64>, f64)> {
    if start_jitter == 0.0 {
        if let Some(l) = cholesky(a) {
            return Ok((l, 0.0));
        }
    }
    let n = a.nrows();
    for &j in JITTER_LADDER.iter().filter(|&&j| j >= start_jitter) {
        let shifted = a + DMatrix::<f64>::identity(n, n) * j;
        if let Some(l) = cholesky(&shifted) {
            return Ok((l, j));
        }
    }
    Err(GenboError::Cholesky { jitter: *JITTER_LADDER.last().unwrap() })
}

/// Factor `L` with `L Lᵀ ≈ a` for a symmetric positive semi-definite matrix.
/// Pivots below a relative tolerance are treated as exact zeros, so rank-deficient
/// covariances (e.g. at noiselessly observed points) yield exact zero columns.
/// Falls back to jitter escalation and finally to a clamped eigendecomposition.
pub fn psd_factor(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let tol = 1e-12 * scale;
    if let Some(l) = semidefinite_cholesky(a, tol) {
        return Ok(l);
    }
    if let Ok((l, _)) = cholesky_jittered(a, JITTER_LADDER[0]) {
        return Ok(l);
    }
    let eig = SymmetricEigen::new(a.clone());
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(GenboError::Cholesky { jitter: *JITTER_LADDER.last().unwrap() });
    }
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals))
}

fn semidefinite_cholesky(a: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !d.is_finite() || d < -tol {
            return None;
        }
        if d <= tol {
            // column stays zero; off-diagonal residuals must vanish too
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if s.abs() > 1e-6 * scale_of(a, i, j) {
                    return None;
                }
            }
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

fn scale_of(a: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (a[(i, i)].abs() * a[(j, j)].abs()).sqrt().max(1e-300)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `Lᵀ x = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `L X = B` column by column.
pub fn solve_lower_matrix(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for c in 0..b.ncols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

/// `(L Lᵀ)⁻¹` from a Cholesky factor.
pub fn cholesky_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let linv = solve_lower_matrix(l, &DMatrix::identity(n, n));
    linv.transpose() * linv
}

/// Symmetrizes in place and, if the smallest eigenvalue is below `-floor`,
/// rebuilds the matrix with negative eigenvalues clamped to zero.
pub fn symmetrize_and_clamp(a: &mut DMatrix<f64>, floor: f64) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
    if n == 0 {
        return;
    }
    if n == 1 {
        a[(0, 0)] = a[(0, 0)].max(0.0);
        return;
    }
    let eig = SymmetricEigen::new(a.clone());
    if eig.eigenvalues.min() < -floor {
        let clamped = eig.eigenvalues.map(|v| v.max(0.0));
        *a = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    }
}
