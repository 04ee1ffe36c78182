//! Dense real matrices and the handful of factorizations the rest of the
//! crate is built on: a Jacobi symmetric eigensolver (with null-space
//! extraction), Cholesky, signed Cholesky and triangular solves.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Index, IndexMut, Mul};

use crate::error::{invalid, Error, Result};

/// Default relative threshold used for rank decisions.
pub const DEFAULT_REL_TOL: f64 = 1e-9;

/// Relative tolerance of the symmetry check.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major data.
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        Self { rows, cols, data: data.to_vec() }
    }

    /// Builds a matrix from a list of rows. Fails on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(invalid("ragged rows"));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
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

    /// Column vector from a slice.
    pub fn column_vector(values: &[f64]) -> Self {
        Self::from_row_slice(values.len(), 1, values)
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
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        assert_eq!(values.len(), self.rows);
        for (i, &v) in values.iter().enumerate() {
            self[(i, j)] = v;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self† · other` without materializing the transpose.
    pub fn tr_mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "tr_mul dimension mismatch");
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a = self.row(k);
            let b = other.row(k);
            for (i, &aki) in a.iter().enumerate() {
                if aki == 0.0 {
                    continue;
                }
                let dst = out.row_mut(i);
                for (d, &bkj) in dst.iter_mut().zip(b) {
                    *d += aki * bkj;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "mul_vec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "tr_mul_vec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    /// `self · diag(s)`.
    pub fn scale_columns(&self, s: &[f64]) -> Matrix {
        assert_eq!(s.len(), self.cols);
        Matrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * s[j])
    }

    /// `diag(s) · self`.
    pub fn scale_rows(&self, s: &[f64]) -> Matrix {
        assert_eq!(s.len(), self.rows);
        Matrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * s[i])
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() }
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(libm::fabs(*v)))
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    /// `(M + M†) / 2`.
    pub fn symmetrized(&self) -> Matrix {
        assert!(self.is_square());
        Matrix::from_fn(self.rows, self.cols, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        Matrix::from_fn(idx.len(), self.cols, |i, j| self[(idx[i], j)])
    }

    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, idx.len(), |i, j| self[(i, idx[j])])
    }

    pub fn hstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "hstack row mismatch");
        Matrix::from_fn(self.rows, self.cols + other.cols, |i, j| if j < self.cols { self[(i, j)] } else { other[(i, j - self.cols)] })
    }

    pub fn vstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "vstack column mismatch");
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Matrix { rows: self.rows + other.rows, cols: self.cols, data }
    }

    pub fn block_diag(blocks: &[&Matrix]) -> Matrix {
        let rows = blocks.iter().map(|b| b.rows).sum();
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            out.set_block(r0, c0, b);
            r0 += b.rows;
            c0 += b.cols;
        }
        out
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Matrix) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }

    /// Largest entrywise asymmetry `max |M_ij - M_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max(libm::fabs(self[(i, j)] - self[(j, i)]));
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &Matrix {
    type Output = Matrix;

    fn mul(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                for (d, &bkj) in dst.iter_mut().zip(rhs.row(k)) {
                    *d += aik * bkj;
                }
            }
        }
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Thin eigendecomposition of a symmetric matrix.
///
/// `vectors` holds the eigenvectors of the retained eigenvalues (sorted by
/// decreasing magnitude), `null_basis` an orthonormal basis of the
/// numerically null eigenspace.
#[derive(Clone, Debug)]
pub struct ThinEvd {
    pub vectors: Matrix,
    pub values: Vec<f64>,
    pub null_basis: Matrix,
}

impl ThinEvd {
    pub fn rank(&self) -> usize {
        self.values.len()
    }

    /// `V · diag(λ) · V†`.
    pub fn reconstruct(&self) -> Matrix {
        let vd = self.vectors.scale_columns(&self.values);
        &vd * &self.vectors.transpose()
    }
}

fn check_finite(m: &Matrix) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(invalid("matrix has non-finite entries"))
    }
}

fn check_symmetric(m: &Matrix) -> Result<()> {
    if !m.is_square() {
        return Err(invalid("matrix is not square"));
    }
    check_finite(m)?;
    if m.asymmetry() > SYMMETRY_TOL * m.max_abs() {
        return Err(Error::NotSymmetric);
    }
    Ok(())
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues and the matrix whose columns are the matching
/// eigenvectors, in the solver's native (unsorted) order.
pub fn sym_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    check_symmetric(m)?;
    let n = m.rows();
    let mut a = m.symmetrized();
    let mut v = Matrix::identity(n);
    for sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)] * a[(i, j)]).sum();
        if off == 0.0 {
            break;
        }
        let thresh = if sweep < 3 { 0.2 * libm::sqrt(off) / (n * n) as f64 } else { 0.0 };
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let g = 100.0 * libm::fabs(apq);
                let (app, aqq) = (a[(p, p)], a[(q, q)]);
                if sweep > 3 && libm::fabs(app) + g == libm::fabs(app) && libm::fabs(aqq) + g == libm::fabs(aqq) {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                if libm::fabs(apq) <= thresh || apq == 0.0 {
                    continue;
                }
                let h = aqq - app;
                let t = if libm::fabs(h) + g == libm::fabs(h) {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (libm::fabs(theta) + libm::sqrt(1.0 + theta * theta));
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
    }
    Ok((a.diagonal(), v))
}

/// Applies the Jacobi rotation zeroing `a[p][q]`.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows();
    for k in 0..n {
        let (akp, akq) = (a[(k, p)], a[(k, q)]);
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Thin eigendecomposition keeping eigenvalues with
/// `|λ| > rel_tol · max |λ|`; the remaining eigenvectors form `null_basis`.
pub fn thin_sym_evd(m: &Matrix, rel_tol: f64) -> Result<ThinEvd> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(invalid("rel_tol must lie in (0, 1)"));
    }
    thin_sym_evd_abs(m, |max_abs| rel_tol * max_abs)
}

/// Same as [`thin_sym_evd`] with an explicit absolute cutoff derived from the
/// largest eigenvalue magnitude.
pub(crate) fn thin_sym_evd_abs(m: &Matrix, cutoff: impl Fn(f64) -> f64) -> Result<ThinEvd> {
    let (values, vecs) = sym_eigen(m)?;
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps the solver's order among ties
    order.sort_by(|&i, &j| libm::fabs(values[j]).partial_cmp(&libm::fabs(values[i])).unwrap_or(core::cmp::Ordering::Equal));
    let max_abs = order.first().map_or(0.0, |&i| libm::fabs(values[i]));
    let cut = cutoff(max_abs);
    let keep: Vec<usize> = order.iter().copied().filter(|&i| max_abs > 0.0 && libm::fabs(values[i]) > cut).collect();
    let drop: Vec<usize> = order.iter().copied().filter(|i| !keep.contains(i)).collect();
    Ok(ThinEvd {
        values: keep.iter().map(|&i| values[i]).collect(),
        vectors: vecs.select_columns(&keep),
        null_basis: vecs.select_columns(&drop),
    })
}

/// Cholesky factor `L` with `M = L·L†`.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    check_symmetric(m)?;
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let ljj = libm::sqrt(d);
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Signed Cholesky (`LDL†` with `D = diag(±1)`): `M = L·diag(signs)·L†`.
pub fn d_cholesky(m: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    check_symmetric(m)?;
    let n = m.rows();
    let floor = 1e-12 * m.frobenius_norm();
    let mut l = Matrix::zeros(n, n);
    let mut signs = vec![0.0; n];
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)] * signs[k];
        }
        if libm::fabs(d) <= floor {
            return Err(Error::SingularPivot { pivot: j });
        }
        let s = if d > 0.0 { 1.0 } else { -1.0 };
        let ljj = libm::sqrt(libm::fabs(d));
        signs[j] = s;
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut acc = m[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)] * signs[k];
            }
            l[(i, j)] = acc / (ljj * s);
        }
    }
    Ok((l, signs))
}

/// Which triangle of the coefficient matrix is populated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Triangle {
    Lower,
    Upper,
}

/// Side on which the triangular factor multiplies the unknown.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `op(T) · X = B`
    Left,
    /// `X · op(T) = B`
    Right,
}

/// Solves `op(T)·X = B` (left) or `X·op(T) = B` (right), where `op` is the
/// identity or the transpose.
pub fn solve_triangular(t: &Matrix, b: &Matrix, triangle: Triangle, transpose: bool, side: Side) -> Result<Matrix> {
    if !t.is_square() {
        return Err(invalid("triangular factor must be square"));
    }
    check_finite(t)?;
    check_finite(b)?;
    for i in 0..t.rows() {
        if t[(i, i)] == 0.0 {
            return Err(Error::SingularTriangular { index: i });
        }
    }
    match side {
        Side::Left => {
            if b.rows() != t.rows() {
                return Err(invalid("right-hand side row count mismatch"));
            }
            // op(T) is lower triangular iff (Lower, no transpose) or (Upper, transpose)
            let lower = (triangle == Triangle::Lower) != transpose;
            let at = |i: usize, j: usize| if transpose { t[(j, i)] } else { t[(i, j)] };
            Ok(substitute(t.rows(), lower, at, b))
        }
        Side::Right => {
            // X·op(T) = B  <=>  op(T)†·X† = B†
            if b.cols() != t.rows() {
                return Err(invalid("right-hand side column count mismatch"));
            }
            let xt = solve_triangular(t, &b.transpose(), triangle, !transpose, Side::Left)?;
            Ok(xt.transpose())
        }
    }
}

fn substitute(n: usize, lower: bool, at: impl Fn(usize, usize) -> f64, b: &Matrix) -> Matrix {
    let mut x = b.clone();
    let order: Vec<usize> = if lower { (0..n).collect() } else { (0..n).rev().collect() };
    for (pos, &i) in order.iter().enumerate() {
        for c in 0..b.cols() {
            let mut s = x[(i, c)];
            for &k in &order[..pos] {
                s -= at(i, k) * x[(k, c)];
            }
            x[(i, c)] = s / at(i, i);
        }
    }
    x
}

/// Lower-triangular solve of a single vector, `L·x = b` or `L†·x = b`.
pub(crate) fn solve_lower_vec(l: &Matrix, b: &[f64], transpose: bool) -> Vec<f64> {
    let n = l.rows();
    let mut x = b.to_vec();
    if !transpose {
        for i in 0..n {
            let row = l.row(i);
            let s = x[i] - dot(&row[..i], &x[..i]);
            x[i] = s / row[i];
        }
    } else {
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
    }
    x
}

/// Thin EVD of `diag(d) + alpha · M · M†`, formed densely.
pub fn rank_p_diag_update(d: &[f64], alpha: f64, m: &Matrix) -> Result<ThinEvd> {
    if m.rows() != d.len() {
        return Err(invalid("update matrix row count must match the diagonal length"));
    }
    if m.cols() == 0 {
        return Err(invalid("update matrix needs at least one column"));
    }
    if !alpha.is_finite() || d.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite diagonal or weight"));
    }
    let mut dense = (m * &m.transpose()).scale(alpha);
    for (i, &di) in d.iter().enumerate() {
        dense[(i, i)] += di;
    }
    thin_sym_evd(&dense.symmetrized(), DEFAULT_REL_TOL)
}
