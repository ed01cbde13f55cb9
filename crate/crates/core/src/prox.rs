//! Dense-matrix utilities and the proximal operators the solver is built from.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Dense real matrix used throughout the crate.
pub type DenseMatrix = DMatrix<f64>;

/// Singular values (relative to the largest) below this count as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Rejects matrices carrying NaN or infinite entries.
pub fn ensure_finite(a: &DenseMatrix, what: &str) -> Result<()> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if !a[(i, j)].is_finite() {
                return Err(Error::Numerical(format!("{what} has a non-finite entry at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// The norms used by the solver and its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixNorms {
    /// Sum of singular values.
    pub nuclear: f64,
    /// Sum of absolute entries.
    pub l1: f64,
    /// Sum of column 2-norms.
    pub l21: f64,
    pub frobenius: f64,
    /// Largest absolute entry.
    pub linf: f64,
    /// Largest singular value.
    pub spectral: f64,
}

pub fn matrix_norms(a: &DenseMatrix) -> Result<MatrixNorms> {
    if a.is_empty() {
        return Err(Error::Dimension("norms of an empty matrix".into()));
    }
    let sv = thin_svd(a).s;
    Ok(MatrixNorms {
        nuclear: sv.iter().sum(),
        l1: a.iter().map(|v| v.abs()).sum(),
        l21: a.column_iter().map(|c| c.norm()).sum(),
        frobenius: a.norm(),
        linf: max_abs(a),
        spectral: sv.iter().cloned().fold(0.0, f64::max),
    })
}

/// Largest absolute entry (0 for an empty matrix).
pub fn max_abs(a: &DenseMatrix) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Largest singular value.
pub fn spectral_norm(a: &DenseMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    thin_svd(a).s.iter().cloned().fold(0.0, f64::max)
}

/// Thin SVD `A = U diag(s) V^T` with `s` non-increasing.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

/// Thin SVD computed with faer, whose divide-and-conquer SVD stays accurate
/// on rank-deficient input. Falls back to nalgebra if faer does not converge.
pub fn thin_svd(a: &DenseMatrix) -> ThinSvd {
    let (r, c) = a.shape();
    let fa = faer::Mat::<f64>::from_fn(r, c, |i, j| a[(i, j)]);
    match fa.thin_svd() {
        Ok(svd) => {
            let (u, v, s) = (svd.U(), svd.V(), svd.S().column_vector());
            let k = r.min(c);
            ThinSvd {
                u: DenseMatrix::from_fn(r, k, |i, j| u[(i, j)]),
                s: (0..k).map(|j| s[j]).collect(),
                v: DenseMatrix::from_fn(c, k, |i, j| v[(i, j)]),
            }
        }
        Err(e) => {
            log::warn!("faer SVD failed ({e:?}); using nalgebra");
            let svd = a.clone().svd(true, true);
            let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
            order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
            let u = svd.u.expect("requested");
            let v_t = svd.v_t.expect("requested");
            ThinSvd {
                u: u.select_columns(&order),
                s: order.iter().map(|&k| svd.singular_values[k]).collect(),
                v: v_t.select_rows(&order).transpose(),
            }
        }
    }
}

/// Singular value thresholding: the minimizer of `tau*||Z||_* + 0.5*||Z - A||_F^2`.
pub fn svt(a: &DenseMatrix, tau: f64) -> DenseMatrix {
    debug_assert!(tau >= 0.0);
    let (r, c) = a.shape();
    if a.is_empty() {
        return a.clone();
    }
    let svd = thin_svd(a);
    let mut out = DenseMatrix::zeros(r, c);
    for (k, &s) in svd.s.iter().enumerate() {
        let shrunk = s - tau;
        if shrunk > 0.0 {
            out.ger(shrunk, &svd.u.column(k), &svd.v.column(k), 1.0);
        }
    }
    out
}

/// Scalar soft threshold `max(x - t, 0) + min(x + t, 0)`.
#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    (x - t).max(0.0) + (x + t).min(0.0)
}

/// Entrywise soft thresholding with per-entry threshold `tau * h_ij`.
pub fn elementwise_shrink(a: &DenseMatrix, h: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    if a.shape() != h.shape() {
        return Err(Error::Dimension(format!("threshold matrix is {:?}, data is {:?}", h.shape(), a.shape())));
    }
    Ok(a.zip_map(h, |x, w| soft_threshold(x, tau * w)))
}

/// Shrinks a vector toward zero by `tau` in 2-norm (group soft threshold).
pub(crate) fn group_shrink_factor(norm: f64, tau: f64) -> f64 {
    if norm <= tau || norm == 0.0 {
        0.0
    } else {
        1.0 - tau / norm
    }
}

/// Column-wise l2,1 proximal map: the minimizer of `tau*||E||_{2,1} + 0.5*||E - C||_F^2`.
pub fn col_l21_prox(c: &DenseMatrix, tau: f64) -> DenseMatrix {
    let mut out = c.clone();
    for mut col in out.column_iter_mut() {
        let s = group_shrink_factor(col.norm(), tau);
        col *= s;
    }
    out
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors stored as columns, matching `eigenvalues`.
    pub eigenvectors: DenseMatrix,
}

fn max_asymmetry(m: &DenseMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Flips the sign of each column so its largest-magnitude entry is positive.
/// Magnitude ties resolve to the lowest row index.
pub fn fix_column_signs(v: &mut DenseMatrix) {
    for mut col in v.column_iter_mut() {
        let mut best = 0;
        let mut best_abs = -1.0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Full symmetric eigendecomposition, eigenvalues ascending, deterministic signs.
pub fn sym_eig(m: &DenseMatrix) -> Result<SpectralDecomposition> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("eigendecomposition of a {:?} matrix", m.shape())));
    }
    let n = m.nrows();
    let scale = max_abs(m).max(1.0);
    let asym = max_asymmetry(m);
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    ensure_finite(m, "symmetric input")?;
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps the backend's order for exactly tied eigenvalues
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut eigenvectors = DenseMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    fix_column_signs(&mut eigenvectors);
    Ok(SpectralDecomposition { eigenvalues, eigenvectors })
}

/// Eigenvectors for the `k` algebraically smallest eigenvalues, as an `N x k` matrix.
pub fn sym_eig_smallest(m: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    let n = m.nrows();
    if k == 0 || k > n {
        return Err(Error::Dimension(format!("requested {k} eigenvectors of a {n}x{n} matrix")));
    }
    let dec = sym_eig(m)?;
    Ok(dec.eigenvectors.columns(0, k).into_owned())
}

/// Eigenvectors for the `k` largest eigenvalues, largest first.
pub fn sym_eig_largest(m: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    let n = m.nrows();
    if k == 0 || k > n {
        return Err(Error::Dimension(format!("requested {k} eigenvectors of a {n}x{n} matrix")));
    }
    let dec = sym_eig(m)?;
    Ok(DenseMatrix::from_fn(n, k, |i, j| dec.eigenvectors[(i, n - 1 - j)]))
}

/// `max |F^T F - I|` over all entries.
pub fn orthonormality_defect(f: &DenseMatrix) -> f64 {
    let g = f.transpose() * f;
    let mut worst = 0.0_f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}
