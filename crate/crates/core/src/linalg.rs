//! Small dense linear algebra over [`Real`]: row-major matrices, Cholesky
//! factorization and triangular solves.
//!
//! Kernels are written so the hot loops are either contiguous `axpy` updates
//! or fixed-lane dot products; both vectorize for `f32` and `f64` while the
//! summation order stays deterministic.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
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
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for (j, &v) in self.row(i).iter().enumerate() {
                t.data[j * self.rows + i] = v;
            }
        }
        t
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Zeroes everything above the diagonal.
    pub fn make_lower(&mut self) {
        for i in 0..self.rows {
            let c = self.cols;
            for v in &mut self.data[i * c + (i + 1).min(c)..(i + 1) * c] {
                *v = T::zero();
            }
        }
    }

    /// `self * v`
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ * v`
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            axpy(vi, self.row(i), &mut out);
        }
        out
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Dot product with eight independent accumulators.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
///
/// On failure returns the index of the first non-positive pivot.
pub fn cholesky<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>, usize> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "cholesky needs a square matrix");
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let (head, tail) = l.data.split_at_mut(j * n);
        let row_j = &mut tail[..n];
        // Row j strictly below-diagonal entries, then the pivot.
        for k in 0..j {
            let row_k = &head[k * n..k * n + k];
            let s = a[(j, k)] - dot(&row_j[..k], row_k);
            row_j[k] = s / head[k * n + k];
        }
        let d = a[(j, j)] - dot(&row_j[..j], &row_j[..j]);
        if !(d > T::zero()) || !d.is_finite() {
            return Err(j);
        }
        row_j[j] = d.sqrt();
    }
    Ok(l)
}

/// Solves `L X = B` in place (`B` has one row per row of `L`).
pub fn solve_lower_in_place<T: Real>(l: &Matrix<T>, b: &mut Matrix<T>) {
    let n = l.rows();
    assert_eq!(b.rows(), n);
    let m = b.cols();
    for i in 0..n {
        let (done, rest) = b.data.split_at_mut(i * m);
        let bi = &mut rest[..m];
        let li = l.row(i);
        for (k, &lik) in li[..i].iter().enumerate() {
            if lik != T::zero() {
                axpy(-lik, &done[k * m..(k + 1) * m], bi);
            }
        }
        let inv = T::one() / li[i];
        for v in bi.iter_mut() {
            *v *= inv;
        }
    }
}

/// Solves `Lᵀ X = B` in place.
pub fn solve_lower_t_in_place<T: Real>(l: &Matrix<T>, b: &mut Matrix<T>) {
    let n = l.rows();
    assert_eq!(b.rows(), n);
    let m = b.cols();
    for i in (0..n).rev() {
        let (head, done) = b.data.split_at_mut((i + 1) * m);
        let bi = &mut head[i * m..];
        for k in i + 1..n {
            let lki = l[(k, i)];
            if lki != T::zero() {
                axpy(-lki, &done[(k - i - 1) * m..(k - i) * m], bi);
            }
        }
        let inv = T::one() / l[(i, i)];
        for v in bi.iter_mut() {
            *v *= inv;
        }
    }
}

pub fn solve_lower_vec<T: Real>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut x = b.to_vec();
    for i in 0..n {
        let s = x[i] - dot(&l.row(i)[..i], &x[..i]);
        x[i] = s / l[(i, i)];
    }
    x
}

pub fn solve_lower_t_vec<T: Real>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let xi = x[i] / l[(i, i)];
        x[i] = xi;
        // column i of L above the diagonal is row i of Lᵀ
        for k in 0..i {
            x[k] -= l[(i, k)] * xi;
        }
    }
    x
}

/// `Lᵀ A` for lower-triangular `L`.
pub fn lower_t_mul<T: Real>(l: &Matrix<T>, a: &Matrix<T>) -> Matrix<T> {
    let n = l.rows();
    assert_eq!(a.rows(), n);
    let m = a.cols();
    let mut out = Matrix::zeros(n, m);
    for b in 0..n {
        let lb = l.row(b);
        let ab = a.row(b);
        for (r, &lbr) in lb[..=b].iter().enumerate() {
            if lbr != T::zero() {
                axpy(lbr, ab, &mut out.data[r * m..(r + 1) * m]);
            }
        }
    }
    out
}

/// `L A` for lower-triangular `L`.
pub fn lower_mul<T: Real>(l: &Matrix<T>, a: &Matrix<T>) -> Matrix<T> {
    let n = l.rows();
    assert_eq!(a.rows(), n);
    let m = a.cols();
    let mut out = Matrix::zeros(n, m);
    for r in 0..n {
        let lr = l.row(r);
        let orow = &mut out.data[r * m..(r + 1) * m];
        for (b, &lrb) in lr[..=r].iter().enumerate() {
            if lrb != T::zero() {
                axpy(lrb, a.row(b), orow);
            }
        }
    }
    out
}

/// `A Bᵀ`. With `lower_only` just the lower triangle (incl. diagonal) is filled.
pub fn mul_abt<T: Real>(a: &Matrix<T>, b: &Matrix<T>, lower_only: bool) -> Matrix<T> {
    assert_eq!(a.cols(), b.cols());
    let mut out = Matrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        let ai = a.row(i);
        let end = if lower_only { (i + 1).min(b.rows()) } else { b.rows() };
        for j in 0..end {
            out[(i, j)] = dot(ai, b.row(j));
        }
    }
    out
}

/// `A B` through the transposed right operand.
pub fn mul<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    assert_eq!(a.cols(), b.rows());
    let m = b.cols();
    let mut out = Matrix::zeros(a.rows(), m);
    for i in 0..a.rows() {
        let orow = &mut out.data[i * m..(i + 1) * m];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik != T::zero() {
                axpy(aik, b.row(k), orow);
            }
        }
    }
    out
}

/// Mirrors the lower triangle into the upper one.
pub fn symmetrize_from_lower<T: Real>(a: &mut Matrix<T>) {
    let n = a.rows();
    for i in 0..n {
        for j in i + 1..n {
            a[(i, j)] = a[(j, i)];
        }
    }
}

/// `(L Lᵀ)⁻¹` from a lower Cholesky factor.
pub fn cholesky_inverse<T: Real>(l: &Matrix<T>) -> Matrix<T> {
    let n = l.rows();
    let mut linv = Matrix::identity(n);
    solve_lower_in_place(l, &mut linv);
    // P = L⁻ᵀ L⁻¹ ; entries are dot products of columns of L⁻¹.
    let lt = linv.transpose();
    let mut p = mul_abt(&lt, &lt, true);
    symmetrize_from_lower(&mut p);
    p
}
