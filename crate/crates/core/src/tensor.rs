//! Dense tensors and matrices plus the multilinear primitives used by the
//! estimators.
//!
//! Storage follows the vec convention: the linear index of `(i_1, .., i_K)`
//! is `i_1 + d_1 * (i_2 + d_2 * (i_3 + ...))`, i.e. mode 0 varies fastest.
//! Matrices are column-major, which is the same convention for `K = 2`, so
//! `unfold` of a tensor and its vectorization agree without copies.
//!
//! Modes are 0-based throughout the Rust API.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Builds a matrix whose columns are the given equal-length vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::shape("columns of unequal length"));
        }
        let data = columns.iter().flatten().copied().collect();
        Ok(Matrix {
            rows,
            cols: columns.len(),
            data,
        })
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
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.rows.max(1)).take(self.cols)
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(
            self.rows,
            self.cols,
            other.cols,
            (&self.data, 1, self.rows),
            (&other.data, 1, other.rows),
            &mut out.data,
        );
        Ok(out)
    }

    /// `selfᵀ * other` without forming the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::shape(format!(
                "cannot multiply ({}x{})ᵀ by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        gemm(
            self.cols,
            self.rows,
            other.cols,
            (&self.data, self.rows, 1),
            (&other.data, 1, other.rows),
            &mut out.data,
        );
        Ok(out)
    }

    /// `self * otherᵀ` without forming the transpose.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} by ({}x{})ᵀ",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        gemm(
            self.rows,
            self.cols,
            other.rows,
            (&self.data, 1, self.rows),
            (&other.data, other.rows, 1),
            &mut out.data,
        );
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::shape(format!(
                "vector of length {} for {} columns",
                v.len(),
                self.cols
            )));
        }
        let mut out = vec![0.0; self.rows];
        for (col, &x) in self.columns().zip(v) {
            if x != 0.0 {
                axpy(x, col, &mut out);
            }
        }
        Ok(out)
    }

    /// `selfᵀ v`.
    pub fn t_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::shape(format!(
                "vector of length {} for {} rows",
                v.len(),
                self.rows
            )));
        }
        Ok(self.columns().map(|c| dot(c, v)).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// `(self + selfᵀ) / 2`; square matrices only.
    pub fn symmetrized(&self) -> Result<Matrix> {
        if self.rows != self.cols {
            return Err(Error::shape("symmetrization needs a square matrix"));
        }
        Ok(Matrix::from_fn(self.rows, self.cols, |i, j| {
            0.5 * (self[(i, j)] + self[(j, i)])
        }))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i + j * self.rows]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i + j * self.rows]
    }
}

/// `c = a * b` for an `m x k` and a `k x n` operand given as (data, row
/// stride, column stride); `c` is column-major `m x n`.
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], usize, usize),
    b: (&[f64], usize, usize),
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    // SAFETY: strides describe in-bounds views of slices holding m*k, k*n and
    // m*n elements respectively; the output does not alias the inputs.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            0.0,
            c.as_mut_ptr(),
            1,
            m as isize,
        );
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Dense order-K tensor in vec order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::shape("tensor dimensions must be positive"));
        }
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::shape(format!(
                "{} values for dims {:?} (expected {len})",
                data.len(),
                dims
            )));
        }
        Ok(DenseTensor { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        DenseTensor {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
        }
    }

    #[inline]
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.dims.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Linear position of a multi-index.
    pub fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        idx.iter()
            .zip(&self.dims)
            .rev()
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let p = self.linear_index(idx);
        self.data[p] = value;
    }

    /// Reinterprets the data with different dimensions of equal total size.
    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        DenseTensor::new(dims, self.data)
    }

    fn check_mode(&self, k: usize) -> Result<()> {
        if k >= self.dims.len() {
            return Err(Error::ModeOutOfRange {
                mode: k,
                order: self.dims.len(),
            });
        }
        Ok(())
    }

    /// (product of dims below k, d_k, product of dims above k)
    fn split(&self, k: usize) -> (usize, usize, usize) {
        let inner: usize = self.dims[..k].iter().product();
        let outer: usize = self.dims[k + 1..].iter().product();
        (inner, self.dims[k], outer)
    }
}

/// Mode-k unfolding: a `d_k x (d / d_k)` matrix whose column index runs over
/// the remaining modes with the smallest mode varying fastest.
pub fn unfold(t: &DenseTensor, k: usize) -> Result<Matrix> {
    t.check_mode(k)?;
    let (inner, dk, outer) = t.split(k);
    let mut out = vec![0.0; t.len()];
    for right in 0..outer {
        for i in 0..dk {
            let src = &t.data[inner * (i + dk * right)..][..inner];
            for (left, &x) in src.iter().enumerate() {
                out[i + dk * (left + inner * right)] = x;
            }
        }
    }
    Matrix::from_col_major(dk, inner * outer, out)
}

/// Inverse of [`unfold`].
pub fn refold(m: &Matrix, dims: &[usize], k: usize) -> Result<DenseTensor> {
    let mut t = DenseTensor::zeros(dims);
    t.check_mode(k)?;
    let (inner, dk, outer) = t.split(k);
    if m.rows() != dk || m.cols() != inner * outer {
        return Err(Error::shape(format!(
            "{}x{} matrix cannot refold to dims {:?} along mode {k}",
            m.rows(),
            m.cols(),
            dims
        )));
    }
    let src = m.data();
    for right in 0..outer {
        for i in 0..dk {
            let dst = &mut t.data[inner * (i + dk * right)..][..inner];
            for (left, x) in dst.iter_mut().enumerate() {
                *x = src[i + dk * (left + inner * right)];
            }
        }
    }
    Ok(t)
}

/// Contracts mode `k` against `v`, dropping that mode.
pub fn mode_vec_product(t: &DenseTensor, k: usize, v: &[f64]) -> Result<DenseTensor> {
    t.check_mode(k)?;
    let (inner, dk, outer) = t.split(k);
    if v.len() != dk {
        return Err(Error::shape(format!(
            "vector of length {} for mode {k} of size {dk}",
            v.len()
        )));
    }
    let mut out = vec![0.0; inner * outer];
    for right in 0..outer {
        let dst = &mut out[inner * right..][..inner];
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                axpy(vi, &t.data[inner * (i + dk * right)..][..inner], dst);
            }
        }
    }
    let mut dims = t.dims.clone();
    dims.remove(k);
    Ok(DenseTensor { dims, data: out })
}

/// Contracts several distinct modes, each against its own vector. Modes are
/// labelled by their position in `t`, independent of application order.
pub fn multi_contract(t: &DenseTensor, contractions: &[(usize, &[f64])]) -> Result<DenseTensor> {
    let mut sorted: Vec<(usize, &[f64])> = contractions.to_vec();
    sorted.sort_by_key(|c| std::cmp::Reverse(c.0));
    for w in sorted.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::DuplicateMode(w[0].0));
        }
    }
    for &(k, v) in &sorted {
        t.check_mode(k)?;
        if v.len() != t.dims[k] {
            return Err(Error::shape(format!(
                "vector of length {} for mode {k} of size {}",
                v.len(),
                t.dims[k]
            )));
        }
    }
    // Highest mode first so lower labels stay valid.
    let mut cur = t.clone();
    for (k, v) in sorted {
        cur = mode_vec_product(&cur, k, v)?;
    }
    Ok(cur)
}

/// Outer product `v_1 ⊗ v_2 ⊗ .. ⊗ v_K`.
pub fn outer(vectors: &[&[f64]]) -> Result<DenseTensor> {
    if vectors.is_empty() {
        return Err(Error::invalid("outer product of an empty list"));
    }
    let mut data = vec![1.0];
    for v in vectors {
        if v.is_empty() {
            return Err(Error::shape("empty factor in outer product"));
        }
        let mut next = Vec::with_capacity(data.len() * v.len());
        for &x in v.iter() {
            next.extend(data.iter().map(|&y| y * x));
        }
        data = next;
    }
    Ok(DenseTensor {
        dims: vectors.iter().map(|v| v.len()).collect(),
        data,
    })
}

/// Column-wise Kronecker product. The first matrix is outermost (slowest), so
/// passing factors in decreasing mode order aligns rows with the column
/// enumeration of [`unfold`].
pub fn khatri_rao(matrices: &[&Matrix]) -> Result<Matrix> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::invalid("Khatri-Rao product of an empty list"))?;
    let r = first.cols();
    if matrices.iter().any(|m| m.cols() != r) {
        return Err(Error::shape("Khatri-Rao factors differ in column count"));
    }
    let rows: usize = matrices.iter().map(|m| m.rows()).product();
    let mut out = Matrix::zeros(rows, r);
    for j in 0..r {
        let mut col = vec![1.0];
        for m in matrices {
            let c = m.col(j);
            let mut next = Vec::with_capacity(col.len() * c.len());
            for &x in &col {
                next.extend(c.iter().map(|&y| x * y));
            }
            col = next;
        }
        out.col_mut(j).copy_from_slice(&col);
    }
    Ok(out)
}

/// Khatri-Rao product of every factor except `skip`, taken in decreasing mode
/// order. `factors` is indexed by mode.
pub fn khatri_rao_except(factors: &[&Matrix], skip: usize) -> Result<Matrix> {
    let ordered: Vec<&Matrix> = factors
        .iter()
        .enumerate()
        .rev()
        .filter(|&(l, _)| l != skip)
        .map(|(_, m)| *m)
        .collect();
    khatri_rao(&ordered)
}

/// Hilbert-Schmidt (Frobenius) norm.
pub fn hs_norm(t: &DenseTensor) -> f64 {
    norm2(&t.data)
}
