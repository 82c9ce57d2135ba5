//! Dense numerical kernels: thin SVD, Householder QR with column pivoting,
//! minimum-norm least squares and square solves.
//!
//! Everything here operates on `nalgebra` column-major matrices. Inputs are
//! checked for non-finite entries at the boundary; the kernels themselves
//! never allocate shared state.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;

/// Relative tolerance used by rank repair when the caller has no opinion.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

pub fn check_finite(a: &DenseMatrix) -> Result<()> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if !a[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

pub fn check_finite_vec(v: &DVector<f64>) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(row) => Err(Error::NonFinite { row, col: 0 }),
        None => Ok(()),
    }
}

/// Thin singular value decomposition `a = U diag(s) V^T`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `n x r` with orthonormal columns.
    pub left_vectors: DenseMatrix,
    /// Nonincreasing, length `r = min(n, m)`.
    pub singular_values: Vec<f64>,
    /// `m x r` with orthonormal columns.
    pub right_vectors: DenseMatrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.left_vectors.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.right_vectors.transpose()
    }

    /// Number of singular values strictly above `rel_tol * s_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let smax = self.singular_values.first().copied().unwrap_or(0.0);
        if smax == 0.0 {
            return 0;
        }
        self.singular_values
            .iter()
            .take_while(|&&s| s > rel_tol * smax)
            .count()
    }
}

/// Thin SVD with singular values sorted nonincreasing and each left vector's
/// largest-magnitude entry made positive.
pub fn thin_svd(a: &DenseMatrix) -> Result<SvdResult> {
    check_finite(a)?;
    let (n, m) = a.shape();
    let r = n.min(m);
    if r == 0 {
        return Ok(SvdResult {
            left_vectors: DenseMatrix::zeros(n, 0),
            singular_values: Vec::new(),
            right_vectors: DenseMatrix::zeros(m, 0),
        });
    }

    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("left vectors requested");
    let v_t = svd.v_t.expect("right vectors requested");
    let s = svd.singular_values;

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&x, &y| s[y].total_cmp(&s[x]).then(x.cmp(&y)));

    let mut left = DenseMatrix::zeros(n, r);
    let mut right = DenseMatrix::zeros(m, r);
    let mut values = Vec::with_capacity(r);
    for (dst, &src) in order.iter().enumerate() {
        let mut ucol = u.column(src).into_owned();
        let mut vcol = v_t.row(src).transpose();
        if largest_magnitude_entry(ucol.as_slice()) < 0.0 {
            ucol.neg_mut();
            vcol.neg_mut();
        }
        left.set_column(dst, &ucol);
        right.set_column(dst, &vcol);
        values.push(s[src]);
    }

    Ok(SvdResult {
        left_vectors: left,
        singular_values: values,
        right_vectors: right,
    })
}

// first entry of maximal magnitude, so ties are broken by position
fn largest_magnitude_entry(xs: &[f64]) -> f64 {
    let mut best = 0.0_f64;
    for &x in xs {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    best
}

/// Householder QR with column pivoting, `a[:, permutation] = Q R`.
#[derive(Clone, Debug)]
pub struct PivotedQr {
    /// `n x r` with orthonormal columns, `r = min(n, m)`.
    pub q: DenseMatrix,
    /// `r x m` upper triangular, `|r[j, j]|` nonincreasing.
    pub r: DenseMatrix,
    /// Column `j` of `Q R` is column `permutation[j]` of the input.
    pub permutation: Vec<usize>,
    pub numerical_rank: usize,
}

impl PivotedQr {
    /// `Q R` with the permutation undone, i.e. an approximation of the input.
    pub fn reconstruct(&self) -> DenseMatrix {
        let qr = &self.q * &self.r;
        let mut out = DenseMatrix::zeros(qr.nrows(), qr.ncols());
        for (j, &src) in self.permutation.iter().enumerate() {
            out.set_column(src, &qr.column(j));
        }
        out
    }
}

/// Pivoted QR. The pivot at each step is the remaining column of largest
/// trailing norm; the numerical rank counts diagonal entries of `R` above
/// `rank_tol * |R[0, 0]|`.
pub fn qr_column_pivot(a: &DenseMatrix, rank_tol: f64) -> Result<PivotedQr> {
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "rank tolerance must lie in (0, 1), got {rank_tol}"
        )));
    }
    check_finite(a)?;
    let (n, m) = a.shape();
    let steps = n.min(m);
    let mut work = a.clone();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut reflectors: Vec<DVector<f64>> = Vec::with_capacity(steps);

    for k in 0..steps {
        // pick the column with the largest trailing norm
        let mut best = k;
        let mut best_norm = -1.0;
        for j in k..m {
            let nrm = work.view((k, j), (n - k, 1)).norm_squared();
            if nrm > best_norm {
                best_norm = nrm;
                best = j;
            }
        }
        if best != k {
            work.swap_columns(k, best);
            perm.swap(k, best);
        }

        let x = work.view((k, k), (n - k, 1)).column(0).into_owned();
        let alpha = x.norm();
        let mut v = x;
        if alpha > 0.0 {
            let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
            v[0] += sign * alpha;
            let vn = v.norm();
            v /= vn;
            // apply H = I - 2 v v^T to the trailing block
            for j in k..m {
                let mut col = work.view_mut((k, j), (n - k, 1));
                let dot = v.dot(&col.column(0));
                col.column_mut(0).axpy(-2.0 * dot, &v, 1.0);
            }
            for i in (k + 1)..n {
                work[(i, k)] = 0.0;
            }
        } else {
            v.fill(0.0);
        }
        reflectors.push(v);
    }

    let mut r = DenseMatrix::zeros(steps, m);
    for j in 0..m {
        for i in 0..steps.min(j + 1) {
            r[(i, j)] = work[(i, j)];
        }
    }

    // Q = H_0 H_1 ... H_{steps-1} applied to the first `steps` unit vectors
    let mut q = DenseMatrix::identity(n, steps);
    for (k, v) in reflectors.iter().enumerate().rev() {
        if v.iter().all(|&x| x == 0.0) {
            continue;
        }
        for j in 0..steps {
            let mut col = q.view_mut((k, j), (n - k, 1));
            let dot = v.dot(&col.column(0));
            col.column_mut(0).axpy(-2.0 * dot, v, 1.0);
        }
    }

    let r00 = if steps > 0 { r[(0, 0)].abs() } else { 0.0 };
    let numerical_rank = if r00 == 0.0 {
        0
    } else {
        (0..steps)
            .take_while(|&j| r[(j, j)].abs() > rank_tol * r00)
            .count()
    };

    Ok(PivotedQr {
        q,
        r,
        permutation: perm,
        numerical_rank,
    })
}

/// Minimum-norm least-squares solution `a^+ b`.
pub fn pseudoinverse_apply(a: &DenseMatrix, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != b.len() {
        return Err(Error::Dimension {
            expected: a.nrows(),
            actual: b.len(),
        });
    }
    check_finite_vec(b)?;
    let svd = thin_svd(a)?;
    let (n, m) = a.shape();
    let smax = svd.singular_values.first().copied().unwrap_or(0.0);
    let cutoff = smax * f64::EPSILON * n.max(m) as f64;
    let mut x = DVector::zeros(m);
    for (j, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            let coef = svd.left_vectors.column(j).dot(b) / s;
            x.axpy(coef, &svd.right_vectors.column(j), 1.0);
        }
    }
    Ok(x)
}

/// Least-squares solve for many right-hand sides at once.
pub fn pseudoinverse_apply_matrix(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension {
            expected: a.nrows(),
            actual: b.nrows(),
        });
    }
    let svd = thin_svd(a)?;
    let (n, m) = a.shape();
    let smax = svd.singular_values.first().copied().unwrap_or(0.0);
    let cutoff = smax * f64::EPSILON * n.max(m) as f64;
    let mut scaled_ut = svd.left_vectors.transpose() * b;
    for (j, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            scaled_ut.row_mut(j).scale_mut(1.0 / s);
        } else {
            scaled_ut.row_mut(j).fill(0.0);
        }
    }
    Ok(&svd.right_vectors * scaled_ut)
}

/// Square solve by partial-pivot LU. Fails with [`Error::Singular`] when a
/// pivot vanishes relative to the matrix scale.
pub fn solve_dense(a: &DenseMatrix, b: &DVector<f64>) -> Result<DVector<f64>> {
    if !a.is_square() {
        return Err(Error::InvalidArgument(format!(
            "square system required, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() != b.len() {
        return Err(Error::Dimension {
            expected: a.nrows(),
            actual: b.len(),
        });
    }
    if a.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    let scale = a.amax();
    if scale == 0.0 {
        return Err(Error::Singular);
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let tiny = scale * f64::EPSILON * a.nrows() as f64;
    if (0..u.nrows()).any(|i| u[(i, i)].abs() <= tiny) {
        return Err(Error::Singular);
    }
    let x = lu.solve(b).ok_or(Error::Singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(x)
}

/// Solve `a x = b` after symmetric diagonal scaling, `(S a S) y = S b` with
/// `x = S y`. Falls back to the minimum-norm least-squares solution of the
/// scaled system when it is numerically singular.
pub fn solve_scaled(a: &DenseMatrix, b: &DVector<f64>, scale: &[f64]) -> Result<DVector<f64>> {
    if scale.len() != a.ncols() {
        return Err(Error::Dimension {
            expected: a.ncols(),
            actual: scale.len(),
        });
    }
    let sa = DenseMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * scale[i] * scale[j]);
    let sb = DVector::from_fn(b.len(), |i, _| b[i] * scale[i]);
    let y = match solve_dense(&sa, &sb) {
        Ok(y) => y,
        Err(Error::Singular) => pseudoinverse_apply(&sa, &sb)?,
        Err(e) => return Err(e),
    };
    Ok(DVector::from_fn(y.len(), |i, _| y[i] * scale[i]))
}

/// Reciprocal column norms, with 1 for zero columns.
pub fn inverse_column_norms(a: &DenseMatrix) -> Vec<f64> {
    a.column_iter()
        .map(|c| {
            let n = c.norm();
            if n > 0.0 {
                1.0 / n
            } else {
                1.0
            }
        })
        .collect()
}

pub fn frobenius(a: &DenseMatrix) -> f64 {
    a.norm()
}
