//! Lagged cross-moment tensors of a tensor time series and the lag utilities
//! built on them.

use log::warn;

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, sym_top_eigs, EIG_MAX_SWEEPS, EIG_TOL};
use crate::tensor::{DenseTensor, Matrix};

/// Default budget for materializing the raw order-2K moment (bytes).
pub const DEFAULT_MOMENT_BUDGET: usize = 2 << 30;

/// `T` observed tensors sharing one shape, stored contiguously in time-major,
/// vec-ordered layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorTimeSeries {
    dims: Vec<usize>,
    len: usize,
    data: Vec<f64>,
}

impl TensorTimeSeries {
    pub fn new(dims: Vec<usize>, len: usize, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::shape("series dimensions must be nonempty and positive"));
        }
        let d: usize = dims.iter().product();
        if data.len() != d * len {
            return Err(Error::shape(format!(
                "{} values for {len} slices of size {d}",
                data.len()
            )));
        }
        Ok(TensorTimeSeries { dims, len, data })
    }

    pub fn from_slices(slices: &[DenseTensor]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::invalid("empty series"))?;
        let dims = first.dims().to_vec();
        if slices.iter().any(|s| s.dims() != dims.as_slice()) {
            return Err(Error::shape("slices do not share dimensions"));
        }
        let data = slices.iter().flat_map(|s| s.data().iter().copied()).collect();
        TensorTimeSeries::new(dims, slices.len(), data)
    }

    pub fn zeros(dims: &[usize], len: usize) -> Self {
        let d: usize = dims.iter().product();
        TensorTimeSeries {
            dims: dims.to_vec(),
            len,
            data: vec![0.0; d * len],
        }
    }

    #[inline]
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of time points `T`.
    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Size of one slice, `d = ∏ d_k`.
    #[inline]
    pub fn slice_len(&self) -> usize {
        self.dims.iter().product()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Vectorized slice `t` (0-based).
    #[inline]
    pub fn slice(&self, t: usize) -> &[f64] {
        let d = self.slice_len();
        &self.data[t * d..(t + 1) * d]
    }

    #[inline]
    pub fn slice_mut(&mut self, t: usize) -> &mut [f64] {
        let d = self.slice_len();
        &mut self.data[t * d..(t + 1) * d]
    }

    pub fn tensor(&self, t: usize) -> DenseTensor {
        DenseTensor::new(self.dims.clone(), self.slice(t).to_vec()).expect("consistent dims")
    }

    /// Slices as the columns of a `d x T` matrix (no copy of layout needed).
    pub fn as_matrix(&self) -> Matrix {
        Matrix::from_col_major(self.slice_len(), self.len, self.data.clone())
            .expect("consistent dims")
    }

    /// Elementwise sum with a series of the same shape.
    pub fn add(&self, other: &TensorTimeSeries) -> Result<TensorTimeSeries> {
        if self.dims != other.dims || self.len != other.len {
            return Err(Error::shape("series shapes differ"));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(TensorTimeSeries {
            dims: self.dims.clone(),
            len: self.len,
            data,
        })
    }
}

/// The lag-h sample cross moment `(T−h)⁻¹ Σ_t X_{t−h} ⊗ X_t`.
///
/// The raw order-2K tensor has dims `(d_1..d_K, d_1..d_K)`; in vec order its
/// data is exactly the column-major `d x d` matrix `M` with
/// `M[i, j] = (T−h)⁻¹ Σ_t X_{t−h}[i] X_t[j]`, so it is stored once as `raw`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedMoment {
    pub h: usize,
    dims: Vec<usize>,
    raw: Option<Matrix>,
    square: Matrix,
}

impl LaggedMoment {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// The symmetrized square unfolding `(M + Mᵀ)/2`.
    pub fn square(&self) -> &Matrix {
        &self.square
    }

    /// The unsymmetrized `d x d` unfolding, when it was kept.
    pub fn raw(&self) -> Option<&Matrix> {
        self.raw.as_ref()
    }

    /// The order-2K tensor view of the raw moment.
    pub fn tensor(&self) -> Option<DenseTensor> {
        let raw = self.raw.as_ref()?;
        let dims: Vec<usize> = self.dims.iter().chain(&self.dims).copied().collect();
        Some(DenseTensor::new(dims, raw.data().to_vec()).expect("consistent dims"))
    }
}

/// Builds the lag-h cross moment, keeping the raw (unsymmetrized) matrix.
pub fn lagged_cross_moment(x: &TensorTimeSeries, h: usize) -> Result<LaggedMoment> {
    lagged_cross_moment_with_budget(x, h, DEFAULT_MOMENT_BUDGET)
}

/// As [`lagged_cross_moment`], but only keeps the raw matrix alongside the
/// symmetrized one when both fit in `budget` bytes.
pub fn lagged_cross_moment_with_budget(
    x: &TensorTimeSeries,
    h: usize,
    budget: usize,
) -> Result<LaggedMoment> {
    let t = x.len();
    if h == 0 || h >= t {
        return Err(Error::invalid(format!(
            "lag {h} outside 1..={} for a series of length {t}",
            t.saturating_sub(1)
        )));
    }
    let d = x.slice_len();
    let lead = Matrix::from_col_major(d, t - h, x.data()[..d * (t - h)].to_vec())?;
    let lagged = Matrix::from_col_major(d, t - h, x.data()[d * h..].to_vec())?;
    let mut raw = lead.matmul_t(&lagged)?;
    raw.scale(1.0 / (t - h) as f64);
    let square = raw.symmetrized()?;
    let keep = 2 * d * d * std::mem::size_of::<f64>() <= budget;
    Ok(LaggedMoment {
        h,
        dims: x.dims().to_vec(),
        raw: keep.then_some(raw),
        square,
    })
}

/// The stored symmetrized square unfolding.
pub fn square_unfold(m: &LaggedMoment) -> &Matrix {
    m.square()
}

/// `Σ_{i≤r} λ̂_i² / ‖S‖_F²` for the symmetrized lag-h square `S`.
pub fn explained_fraction(x: &TensorTimeSeries, h: usize, r: usize) -> Result<f64> {
    let m = lagged_cross_moment_with_budget(x, h, 0)?;
    fraction_of(m.square(), r)
}

fn fraction_of(s: &Matrix, r: usize) -> Result<f64> {
    if r == 0 || r > s.rows() {
        return Err(Error::invalid(format!("r = {r} for dimension {}", s.rows())));
    }
    let total = s.frobenius_norm().powi(2);
    if total == 0.0 {
        return Err(Error::Degenerate("all-zero lagged moment".into()));
    }
    let top = sym_top_eigs(s, r, EIG_TOL, EIG_MAX_SWEEPS)?;
    let num: f64 = top.values.iter().map(|l| l * l).sum();
    Ok((num / total).min(1.0))
}

/// Explained fraction for every lag in `1..=h_max` plus the selected lag
/// (argmax, ties to the smallest lag).
pub fn lag_scan(x: &TensorTimeSeries, h_max: usize, r: usize) -> Result<(Vec<(usize, f64)>, usize)> {
    if h_max == 0 || h_max >= x.len() {
        return Err(Error::invalid(format!(
            "h_max {h_max} outside 1..={}",
            x.len().saturating_sub(1)
        )));
    }
    if h_max > x.len() / 4 {
        warn!("h_max {h_max} exceeds T/4 = {}", x.len() / 4);
    }
    let table = (1..=h_max)
        .map(|h| explained_fraction(x, h, r).map(|f| (h, f)))
        .collect::<Result<Vec<_>>>()?;
    let mut best = table[0];
    for &(h, f) in &table[1..] {
        if f > best.1 {
            best = (h, f);
        }
    }
    Ok((table, best.0))
}

/// Lag in `1..=h_max` maximizing [`explained_fraction`].
pub fn select_lag(x: &TensorTimeSeries, h_max: usize, r: usize) -> Result<usize> {
    if h_max == 1 {
        return Ok(1);
    }
    lag_scan(x, h_max, r).map(|(_, h)| h)
}

/// Refines an orthonormal `d x r` basis to the top-r eigenvectors of
/// `Σ_{h≤h_max} S_h U Uᵀ S_h`, repeated for `sweeps` sweeps or until the
/// projector moves by at most 1e-8.
pub fn multi_lag_refine(
    x: &TensorTimeSeries,
    h_max: usize,
    r: usize,
    u0: &Matrix,
    sweeps: usize,
) -> Result<Matrix> {
    let d = x.slice_len();
    if u0.rows() != d || u0.cols() != r {
        return Err(Error::shape(format!(
            "basis is {}x{}, expected {d}x{r}",
            u0.rows(),
            u0.cols()
        )));
    }
    if sweeps == 0 {
        return Ok(u0.clone());
    }
    if h_max == 0 || h_max >= x.len() {
        return Err(Error::invalid(format!("h_max {h_max} out of range")));
    }
    let squares = (1..=h_max)
        .map(|h| lagged_cross_moment_with_budget(x, h, 0).map(|m| m.square))
        .collect::<Result<Vec<_>>>()?;
    let mut u = u0.clone();
    for _ in 0..sweeps {
        // Σ_h S_h U Uᵀ S_h = W Wᵀ with W = [S_1 U, .., S_H U]; its top
        // eigenvectors are the top left singular vectors of W.
        let blocks = squares
            .iter()
            .map(|s| s.matmul(&u))
            .collect::<Result<Vec<_>>>()?;
        let cols: Vec<Vec<f64>> = blocks
            .iter()
            .flat_map(|b| b.columns().map(<[f64]>::to_vec).collect::<Vec<_>>())
            .collect();
        let w = Matrix::from_columns(&cols)?;
        let gram = w.t_matmul(&w)?;
        let eig = sym_eigen(&gram)?;
        let mut next = Matrix::zeros(d, r);
        for j in 0..r {
            let sv = eig.values[j];
            if sv <= 0.0 {
                return Err(Error::Degenerate(
                    "multi-lag operator has rank below r".into(),
                ));
            }
            let col = w.matvec(eig.vectors.col(j))?;
            let inv = 1.0 / sv.sqrt();
            next.col_mut(j)
                .iter_mut()
                .zip(col)
                .for_each(|(dst, x)| *dst = x * inv);
        }
        let change = projector_distance(&u, &next)?;
        u = next;
        if change <= 1e-8 {
            break;
        }
    }
    Ok(u)
}

/// `‖U Uᵀ − V Vᵀ‖_S` for orthonormal bases of equal rank, computed as the
/// spectral norm of the residual `V − U (Uᵀ V)`.
pub fn projector_distance(u: &Matrix, v: &Matrix) -> Result<f64> {
    if u.rows() != v.rows() || u.cols() != v.cols() {
        return Err(Error::shape("bases differ in shape"));
    }
    let uc = u.matmul(&u.t_matmul(v)?)?;
    let resid = Matrix::from_fn(v.rows(), v.cols(), |i, j| v[(i, j)] - uc[(i, j)]);
    let g = resid.t_matmul(&resid)?;
    let largest = sym_eigen(&g)?.values.first().copied().unwrap_or(0.0);
    Ok(largest.max(0.0).sqrt().min(1.0))
}
