//! Dense real-matrix kernels.
//!
//! Everything here works on [`Matrix`], a small row-major matrix type
//! (`data[i * cols + j]` holds entry `(i, j)`). Problem sizes in factorial
//! designs are modest (a few hundred rows at most), so no sparse formats or
//! blocked algorithms are used. Symmetric eigendecomposition is delegated
//! to `nalgebra`; the pseudo-inverse is built on top of it.

use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest number of entries a Kronecker product may produce.
pub const MAX_ENTRIES: usize = 1 << 26;

const EIGEN_MAX_ITER: usize = 10_000;

/// Relative tolerance used to decide whether a matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dim(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("matrix contains non-finite entries"));
        }
        Ok(Self { rows, cols, data })
    }

    /// # Panics
    /// Panics on ragged or empty input. Meant for literals in tests and examples.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        assert!(!rows.is_empty() && !rows[0].is_empty(), "empty matrix literal");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "row {i} has {} entries, expected {cols}", r.len());
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
    }

    /// Block-diagonal matrix with the given square blocks.
    pub fn block_diag(blocks: &[Matrix]) -> Self {
        let n: usize = blocks.iter().map(|b| b.rows).sum();
        let m: usize = blocks.iter().map(|b| b.cols).sum();
        let mut out = Self::zeros(n, m);
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            for i in 0..b.rows {
                for j in 0..b.cols {
                    out[(r0 + i, c0 + j)] = b[(i, j)];
                }
            }
            r0 += b.rows;
            c0 += b.cols;
        }
        out
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Matrix {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dim(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::dim(format!(
                "cannot multiply {}x{} by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dim(format!(
                "shape mismatch {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entrywise difference; infinite when shapes differ.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let tol = rel_tol * self.max_abs().max(1.0);
        (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for v in self.row(i) {
                write!(f, "{v:>10.5} ")?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Kronecker product `a ⊗ b`.
///
/// Entry `(i·b.rows + k, j·b.cols + l)` of the result is `a[i,j]·b[k,l]`.
pub fn kronecker(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let rows = a
        .rows
        .checked_mul(b.rows)
        .ok_or_else(|| Error::dim("kronecker row count overflows"))?;
    let cols = a
        .cols
        .checked_mul(b.cols)
        .ok_or_else(|| Error::dim("kronecker column count overflows"))?;
    match rows.checked_mul(cols) {
        Some(n) if n <= MAX_ENTRIES => {}
        _ => {
            return Err(Error::dim(format!(
                "kronecker product {rows}x{cols} exceeds the cap of {MAX_ENTRIES} entries"
            )))
        }
    }
    let mut out = Matrix::zeros(rows, cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            for k in 0..b.rows {
                let dst = (i * b.rows + k) * cols + j * b.cols;
                for (o, v) in out.data[dst..dst + b.cols].iter_mut().zip(b.row(k)) {
                    *o = s * v;
                }
            }
        }
    }
    Ok(out)
}

/// Kronecker product of a non-empty sequence, folded left to right.
pub fn kronecker_chain(factors: &[Matrix]) -> Result<Matrix> {
    let (first, rest) = factors
        .split_first()
        .ok_or_else(|| Error::dim("kronecker chain needs at least one factor"))?;
    rest.iter().try_fold(first.clone(), |acc, m| kronecker(&acc, m))
}

/// Centering matrix `P_n = I_n − J_n / n`.
pub fn centering_matrix(n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::dim("centering matrix needs n >= 1"));
    }
    let inv = 1.0 / n as f64;
    Ok(Matrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 - inv
        } else {
            -inv
        }
    }))
}

/// Averaging matrix `J_n / n`.
pub fn averaging_matrix(n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::dim("averaging matrix needs n >= 1"));
    }
    let inv = 1.0 / n as f64;
    Ok(Matrix::from_fn(n, n, |_, _| inv))
}

/// Moore–Penrose pseudo-inverse together with the numerical rank.
///
/// Singular values at or below `ε·max(rows, cols)·σ_max` are treated as zero.
///
/// The singular value decomposition is obtained from a symmetric
/// eigendecomposition: of `m` itself when it is symmetric (singular values
/// `|λ|`), otherwise of `[[0, m], [m', 0]]`, whose eigenvalues are `±σ` and
/// whose pseudo-inverse carries `m⁺` in its lower-left block. The general
/// bidiagonal SVD routine was found to return inaccurate factors for
/// projection-like matrices with many zero singular values.
pub fn pseudo_inverse(m: &Matrix) -> Result<(Matrix, usize)> {
    if m.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("pseudo-inverse of a matrix with non-finite entries"));
    }
    let (r, c) = (m.rows, m.cols);
    let scale = m.max_abs();
    let symmetric = m.is_square()
        && (0..r).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * scale));
    let h = if symmetric {
        Matrix::from_fn(r, r, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
    } else {
        let n = r + c;
        Matrix::from_fn(n, n, |i, j| {
            if i < r && j >= r {
                m[(i, j - r)]
            } else if i >= r && j < r {
                m[(j, i - r)]
            } else {
                0.0
            }
        })
    };
    let eig = SymmetricEigen::try_new(h.to_nalgebra(), f64::EPSILON, EIGEN_MAX_ITER).ok_or_else(|| {
        Error::numerical(format!(
            "eigendecomposition for the pseudo-inverse of a {r}x{c} matrix did not converge \
             (max |entry| = {:e})",
            m.max_abs()
        ))
    })?;
    let sigma_max = eig.eigenvalues.iter().fold(0.0_f64, |a, &l| a.max(l.abs()));
    let tol = f64::EPSILON * r.max(c) as f64 * sigma_max;
    let w = &eig.eigenvectors;

    let mut pinv = Matrix::zeros(c, r);
    let mut kept = 0;
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l.abs() <= tol || l == 0.0 {
            continue;
        }
        kept += 1;
        let inv = 1.0 / l;
        // symmetric: w_k w_k' / λ; augmented: lower-left block of the same
        let (row_off, col_off) = if symmetric { (0, 0) } else { (r, 0) };
        for i in 0..c {
            let wi = w[(row_off + i, k)] * inv;
            if wi == 0.0 {
                continue;
            }
            for j in 0..r {
                pinv[(i, j)] += wi * w[(col_off + j, k)];
            }
        }
    }
    let rank = if symmetric { kept } else { kept / 2 };
    Ok((pinv, rank))
}

/// Numerical rank with the same threshold as [`pseudo_inverse`].
pub fn rank(m: &Matrix) -> Result<usize> {
    pseudo_inverse(m).map(|(_, r)| r)
}

fn symmetric_eigen(s: &Matrix) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if !s.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::dim(format!(
            "{}x{} matrix is not symmetric",
            s.rows, s.cols
        )));
    }
    SymmetricEigen::try_new(s.to_nalgebra(), f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::numerical("symmetric eigendecomposition did not converge"))
}

/// Square root factor `A = U·diag(√max(λ, 0))` of a symmetric matrix, so that
/// `A·A'` equals the input with negative eigenvalues clipped to zero.
pub fn sym_sqrt(s: &Matrix) -> Result<Matrix> {
    let eig = symmetric_eigen(s)?;
    let n = s.rows;
    let roots: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    Ok(Matrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, j)] * roots[j]))
}

/// Orthonormal basis of the row space of a symmetric idempotent matrix,
/// returned as the rows of a `rank × n` matrix `C` with `C'C = t`.
///
/// Returns `None` when `t` has rank zero.
pub fn projection_basis(t: &Matrix) -> Result<Option<Matrix>> {
    let eig = symmetric_eigen(t)?;
    let n = t.rows;
    let keep: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > 0.5).collect();
    if keep.is_empty() {
        return Ok(None);
    }
    Ok(Some(Matrix::from_fn(keep.len(), n, |r, j| {
        eig.eigenvectors[(j, keep[r])]
    })))
}

/// Quadratic form `y'·A⁺·y` for a symmetric positive semi-definite `k × k`
/// matrix stored row-major in `a`.
///
/// A Cholesky factorisation is used when every pivot is comfortably positive;
/// otherwise this falls back to the SVD pseudo-inverse.
pub fn psd_quadratic_form(a: &[f64], k: usize, y: &[f64]) -> Result<f64> {
    debug_assert_eq!(a.len(), k * k);
    debug_assert_eq!(y.len(), k);
    let max_diag = (0..k).fold(0.0_f64, |m, i| m.max(a[i * k + i]));
    if max_diag <= 0.0 {
        return Ok(0.0);
    }
    if let Some(v) = cholesky_quadratic_form(a, k, y, 1e-10 * max_diag) {
        return Ok(v);
    }
    let m = Matrix::new(k, k, a.to_vec())?;
    let (pinv, _) = pseudo_inverse(&m)?;
    let py = pinv.matvec(y)?;
    Ok(y.iter().zip(&py).map(|(a, b)| a * b).sum())
}

// Solves L z = y and returns z'z; None when a pivot falls below `min_pivot`.
fn cholesky_quadratic_form(a: &[f64], k: usize, y: &[f64], min_pivot: f64) -> Option<f64> {
    let mut l = vec![0.0; k * k];
    for j in 0..k {
        let mut d = a[j * k + j];
        for m in 0..j {
            d -= l[j * k + m] * l[j * k + m];
        }
        if d <= min_pivot {
            return None;
        }
        let djj = d.sqrt();
        l[j * k + j] = djj;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for m in 0..j {
                s -= l[i * k + m] * l[j * k + m];
            }
            l[i * k + j] = s / djj;
        }
    }
    let mut z = vec![0.0; k];
    let mut total = 0.0;
    for i in 0..k {
        let mut s = y[i];
        for m in 0..i {
            s -= l[i * k + m] * z[m];
        }
        z[i] = s / l[i * k + i];
        total += z[i] * z[i];
    }
    Some(total)
}
